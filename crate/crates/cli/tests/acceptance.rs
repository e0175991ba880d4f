//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails. Run with
//! `cargo test --release -p seqdrift-cli --test acceptance`.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use seqdrift_core::calibration::{
    configure_calm_with, Algorithm, CalibrationConfig, MmdDirectEvaluator, MmdGramEvaluator,
};
use seqdrift_core::io::write_reference_csv;
use seqdrift_core::kernel_metrics::{
    mmd2_batch, offdiag_sum, partitioned_sums, CountingKernel, KernelSpec, MmdCache, RbfKernel,
    WindowStatistic,
};
use seqdrift_core::simbench::{
    run_experiment, sample_problem, window_sharing_bias_study, BiasStudyConfig, ExperimentConfig,
    Phase, Problem,
};
use seqdrift_core::{Detector, ReferenceSet};

struct Verdict {
    pass: bool,
    detail: String,
}

fn gaussian(n: usize, d: usize, shift: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..d)
                .map(|_| shift + Distribution::<f64>::sample(&StandardNormal, rng))
                .collect()
        })
        .collect()
}

fn streaming_matches_batch() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let combos: Vec<(usize, usize, usize)> = [1, 5, 20]
        .iter()
        .flat_map(|&d| [10, 100].iter().flat_map(move |&m| [5, 25].iter().map(move |&w| (d, m, w))))
        .collect();
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    for s in 0..200 {
        let (d, m, w) = combos[s % combos.len()];
        let sigma = rng.random_range(0.5..3.0) * (d as f64).sqrt();
        let kernel = RbfKernel::new(sigma).unwrap();
        let reference = gaussian(m, d, 0.0, &mut rng);
        // drift halfway through so both small and large statistics occur
        let mut stream = gaussian(250, d, 0.0, &mut rng);
        stream.extend(gaussian(250, d, 1.0, &mut rng));
        let mut cache = MmdCache::new(&reference, w, kernel).unwrap();
        for (i, z) in stream.iter().enumerate() {
            let got = cache.push(z).unwrap();
            if i + 1 < w {
                if got.is_some() {
                    return Verdict { pass: false, detail: format!("statistic before window full at stream {s}") };
                }
                continue;
            }
            let got = got.unwrap();
            let want = mmd2_batch(&reference, &stream[i + 1 - w..=i], &kernel).unwrap();
            let rel = (got - want).abs() / want.abs().max(f64::MIN_POSITIVE);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    Verdict {
        pass: worst <= 1e-8,
        detail: format!("{checked} statistics over 200 streams, worst relative error {worst:.2e} (tol 1e-8)"),
    }
}

fn partition_identity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(3..=200);
        let d = rng.random_range(1..=6);
        let flat: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let data = ReferenceSet::from_flat(flat, d).unwrap();
        let kernel = RbfKernel::new(rng.random_range(0.2..4.0)).unwrap();
        let l = rng.random_range(1..n - 1);
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            idx.swap(i, rng.random_range(0..=i));
        }
        let (holdout, refs) = idx.split_at(l);

        // brute-force block sums
        let k = |i: usize, j: usize| kernel_eval(&kernel, data.row(i), data.row(j));
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    total += k(i, j);
                }
            }
        }
        let offdiag = |s: &[usize]| {
            let mut acc = 0.0;
            for (a, &i) in s.iter().enumerate() {
                for (b, &j) in s.iter().enumerate() {
                    if a != b {
                        acc += k(i, j);
                    }
                }
            }
            acc
        };
        let a = offdiag(refs);
        let c = offdiag(holdout);
        let b: f64 = refs.iter().map(|&i| holdout.iter().map(|&j| k(i, j)).sum::<f64>()).sum();
        let identity = (total - (a + c + 2.0 * b)).abs() / total.abs();

        let view = partitioned_sums(&data, refs, holdout, &kernel, offdiag_sum(&data, &kernel)).unwrap();
        let derived = (view.ref_offdiag_sum - a).abs() / total.abs();
        let cross = (view.cross_sum - b).abs() / total.abs();
        let test = (view.test_offdiag_sum - c).abs() / total.abs();
        worst = worst.max(identity).max(derived).max(cross).max(test);
    }
    Verdict {
        pass: worst <= 1e-9,
        detail: format!("1000 partitions, worst relative deviation {worst:.2e} (tol 1e-9)"),
    }
}

fn kernel_eval(k: &RbfKernel, x: &[f64], y: &[f64]) -> f64 {
    use seqdrift_core::kernel_metrics::Kernel;
    k.eval(x, y)
}

fn complexity_contract() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut problems = Vec::new();

    let (m, w) = (481usize, 10usize);
    let reference = gaussian(m, 20, 0.0, &mut rng);
    let stream = gaussian(300, 20, 0.0, &mut rng);
    let counting = CountingKernel::new(RbfKernel::new(6.0).unwrap());
    let engine = MmdCache::new(&reference, w, counting.clone()).unwrap();
    let mut det = Detector::new(vec![f64::INFINITY; w], Box::new(engine) as Box<dyn WindowStatistic>).unwrap();
    let mut steady = 0;
    for (i, z) in stream.iter().enumerate() {
        counting.reset();
        det.step(z).unwrap();
        let want = (m + i.min(w - 1)) as u64;
        if counting.count() != want {
            problems.push(format!("step {i}: {} calls, expected {want}", counting.count()));
        }
        if i + 1 >= w {
            steady += 1;
        }
    }

    let (n, w, b) = (300usize, 10usize, 2000usize);
    let data = ReferenceSet::from_rows(&gaussian(n, 5, 0.0, &mut rng)).unwrap();
    let mut cfg = CalibrationConfig::new(w, 100.0, b, 3);
    cfg.kernel = KernelSpec::rbf(3.0);
    let counting = CountingKernel::new(RbfKernel::new(3.0).unwrap());
    configure_calm_with(&data, &cfg, &MmdDirectEvaluator::new(&data, counting.clone())).unwrap();
    let direct = counting.count();
    let bound = (n * n + n * (2 * w - 1) * b) as u64;
    if direct > bound {
        problems.push(format!("direct configure: {direct} calls > bound {bound}"));
    }
    counting.reset();
    configure_calm_with(&data, &cfg, &MmdGramEvaluator::new(&data, &counting)).unwrap();
    let gram = counting.count();
    if gram > (n * n) as u64 {
        problems.push(format!("gram configure: {gram} calls > N^2"));
    }

    Verdict {
        pass: problems.is_empty(),
        detail: if problems.is_empty() {
            format!(
                "{steady} steady steps at M+W-1={}; configure direct {direct} <= {bound}, gram {gram} <= N^2",
                m + w - 1
            )
        } else {
            problems.join("; ")
        },
    }
}

fn calibration_and_memorylessness() -> (Verdict, Verdict) {
    let cal = CalibrationConfig::new(10, 100.0, 20_000, 1);
    let mut cfg = ExperimentConfig::new(Problem::D1, 500, cal);
    cfg.configs = 10;
    cfg.runs = 500;
    let r = run_experiment(&cfg).unwrap();

    let c4 = Verdict {
        pass: r.runtimes.len() == 5000 && r.miscalibration < 0.05,
        detail: format!(
            "ART {:.2} over {} runtimes ({} timeouts), |ART-ERT|/ERT = {:.4} (tol 0.05)",
            r.art,
            r.runtimes.len(),
            r.timeouts,
            r.miscalibration
        ),
    };

    let alpha = r.alpha;
    let inside = r
        .hazard
        .iter()
        .filter(|h| (1..=31).contains(&h.k))
        .filter(|h| h.lower <= alpha && alpha <= h.upper)
        .count();
    let c5 = Verdict {
        pass: r.ks_distance < r.ks_critical_1pct && inside >= 29,
        detail: format!(
            "KS {:.4} vs critical {:.4}; hazard inside 99% bands at {inside}/31 steps (need 29)",
            r.ks_distance, r.ks_critical_1pct
        ),
    };
    (c4, c5)
}

fn baseline_direction() -> Verdict {
    let cal = CalibrationConfig::new(10, 100.0, 20_000, 1);
    let mut cfg = ExperimentConfig::new(Problem::D1, 500, cal);
    cfg.algorithm = Algorithm::LsddInc;
    cfg.configs = 2;
    cfg.runs = 50;
    let r = run_experiment(&cfg).unwrap();
    // Timed-out runs are capped at 100*ERT tests; the censored mean is a lower
    // bound on the true ART, so exceeding the bar with it is conclusive.
    let ratio = r.art_censored / r.ert;
    Verdict {
        pass: ratio > 1.05,
        detail: format!(
            "censored ART {:.1} (lower bound, {} of {} runs timed out at {}), ART/ERT >= {ratio:.2} (need > 1.05)",
            r.art_censored,
            r.timeouts,
            cfg.configs * cfg.runs,
            r.timeout_cap
        ),
    }
}

fn power_sanity() -> Verdict {
    let mut parts = Vec::new();
    let mut pass = true;
    for (problem, bar) in [(Problem::D1, 0.85), (Problem::D4, 0.30)] {
        let cal = CalibrationConfig::new(25, 128.0, 25_000, 1);
        let mut cfg = ExperimentConfig::new(problem, 1000, cal);
        cfg.configs = 3;
        cfg.runs = 200;
        cfg.power = true;
        let r = run_experiment(&cfg).unwrap();
        let p = r.power.expect("power report");
        let red = p.reduction.unwrap_or(f64::NEG_INFINITY);
        pass &= red >= bar;
        parts.push(format!(
            "{} reduction {red:.3} (need >= {bar}, ART {:.1}, ADD {:.2})",
            problem.as_str(),
            r.art,
            p.add.unwrap_or(f64::NAN)
        ));
    }
    Verdict { pass, detail: parts.join("; ") }
}

fn window_sharing_bias() -> Verdict {
    let hi = window_sharing_bias_study(&BiasStudyConfig::new(20, 1)).unwrap();
    let lo = window_sharing_bias_study(&BiasStudyConfig::new(1, 1)).unwrap();
    let gap = (lo.ks_with_replacement - lo.ks_without_replacement).abs();
    Verdict {
        pass: hi.ks_with_replacement > hi.ks_without_replacement && gap < 0.03,
        detail: format!(
            "d=20 with {:.4} > without {:.4}; d=1 |{:.4} - {:.4}| = {gap:.4} (need < 0.03)",
            hi.ks_with_replacement, hi.ks_without_replacement, lo.ks_with_replacement, lo.ks_without_replacement
        ),
    }
}

fn seqdrift(threads: &str, args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_seqdrift"))
        .arg("--threads")
        .arg(threads)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    match out.status.code() {
        Some(0) | Some(2) => Ok(out.stdout),
        c => Err(format!("{args:?} exited {c:?}: {}", String::from_utf8_lossy(&out.stderr))),
    }
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                files.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn determinism() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let mut r = seqdrift_core::rng::stream(9, seqdrift_core::rng::domain::REFERENCE, 0);
    let refp = root.join("ref.csv");
    write_reference_csv(&refp, &sample_problem(Problem::D4, Phase::Pre, 300, &mut r).unwrap()).unwrap();
    let streamp = root.join("stream.csv");
    let rows = sample_problem(Problem::D4, Phase::Post, 400, &mut r).unwrap();
    write_reference_csv(&streamp, &rows).unwrap();
    let refs = refp.to_str().unwrap();

    let mut compared = 0;
    let mut outputs: Vec<Vec<(String, Vec<u8>)>> = Vec::new();
    for threads in ["1", "2"] {
        let dir = root.join(format!("t{threads}"));
        fs::create_dir_all(&dir).unwrap();
        let p = |name: &str| dir.join(name).to_str().unwrap().to_string();
        let steps: Vec<Vec<String>> = vec![
            vec!["configure", "--ref", refs, "--window", "5", "--ert", "40", "--bootstraps", "3000", "--seed", "4", "--out", &p("calm.json")]
                .into_iter().map(String::from).collect(),
            vec!["configure", "--ref", refs, "--window", "5", "--ert", "40", "--bootstraps", "3000", "--seed", "4", "--algorithm", "lsdd-inc", "--expectation-samples", "500", "--out", &p("lsdd.json")]
                .into_iter().map(String::from).collect(),
            vec!["run", "--schedule", &p("calm.json"), "--ref", refs, "--input", streamp.to_str().unwrap(), "--mode", "from-start", "--out", &p("events.jsonl")]
                .into_iter().map(String::from).collect(),
            vec!["simulate", "--problem", "d3", "--ert", "20", "--n", "200", "--window", "5", "--bootstraps", "1000", "--configs", "3", "--runs", "30", "--power", "on", "--seed", "5", "--out", &p("sim")]
                .into_iter().map(String::from).collect(),
            vec!["bias-study", "--dims", "1,3", "--n", "150", "--window", "5", "--bootstraps", "800", "--seed", "6", "--out", &p("bias.csv")]
                .into_iter().map(String::from).collect(),
        ];
        for args in &steps {
            let a: Vec<&str> = args.iter().map(String::as_str).collect();
            if let Err(e) = seqdrift(threads, &a) {
                return Verdict { pass: false, detail: e };
            }
        }
        outputs.push(tree(&dir));
    }
    let (a, b) = (&outputs[0], &outputs[1]);
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    if names != b.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>() {
        return Verdict { pass: false, detail: "file sets differ between thread counts".into() };
    }
    let mut differing = Vec::new();
    for ((name, x), (_, y)) in a.iter().zip(b) {
        compared += 1;
        if x != y {
            differing.push(name.clone());
        }
    }
    Verdict {
        pass: differing.is_empty() && compared > 0,
        detail: if differing.is_empty() {
            format!("{compared} output files byte-identical at 1 and 2 threads")
        } else {
            format!("differ: {}", differing.join(", "))
        },
    }
}

fn report(n: u32, v: &Verdict, started: Instant, failures: &mut u32) {
    let tag = if v.pass { "PASS" } else { "FAIL" };
    println!("criterion {n}: {tag} [{:.1}s] {}", started.elapsed().as_secs_f64(), v.detail);
    if !v.pass {
        *failures += 1;
    }
}

fn main() {
    let mut failures = 0;
    let t = Instant::now();
    report(1, &streaming_matches_batch(), t, &mut failures);
    let t = Instant::now();
    report(2, &partition_identity(), t, &mut failures);
    let t = Instant::now();
    report(3, &complexity_contract(), t, &mut failures);
    let t = Instant::now();
    let (c4, c5) = calibration_and_memorylessness();
    report(4, &c4, t, &mut failures);
    report(5, &c5, t, &mut failures);
    let t = Instant::now();
    report(6, &baseline_direction(), t, &mut failures);
    let t = Instant::now();
    report(7, &power_sanity(), t, &mut failures);
    let t = Instant::now();
    report(8, &window_sharing_bias(), t, &mut failures);
    let t = Instant::now();
    report(9, &determinism(), t, &mut failures);
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}

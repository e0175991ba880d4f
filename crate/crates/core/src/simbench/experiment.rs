//! Calibration and power experiments over synthetic problems.
//!
//! Runtimes are reported as the number of tests performed up to and
//! including the detection, so the first possible runtime is 1 in both
//! modes and a perfectly calibrated detector has geometric runtimes with
//! mean ERT.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{
    geometric_qq, hazard, ks_critical_1pct, ks_geometric, mean_u64, miscalibration, reduction,
    HazardPoint, QqPoint,
};
use super::problems::{sample_problem, Phase, Problem, StreamModel};
use crate::calibration::{configure, Algorithm, CalibrationConfig};
use crate::detector::{Detector, RunOutcome, StartMode, DEFAULT_MAX_ATTEMPTS};
use crate::error::{Error, Result};
use crate::kernel_metrics::{Bandwidth, EstimatorKind};
use crate::rng::{self, derive_seed, domain};

fn default_timeout_factor() -> f64 {
    100.0
}

fn default_max_attempts() -> usize {
    DEFAULT_MAX_ATTEMPTS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: Problem,
    /// Reference set size `N` drawn afresh for each configuration.
    pub n: usize,
    /// Calibration settings; `seed` is the master seed of the experiment.
    pub calibration: CalibrationConfig,
    pub algorithm: Algorithm,
    pub mode: StartMode,
    /// Independent reference sets (each calibrated once).
    pub configs: usize,
    /// Runs per configuration.
    pub runs: usize,
    /// Runs are stopped after `timeout_factor * ERT` tests.
    #[serde(default = "default_timeout_factor")]
    pub timeout_factor: f64,
    /// Also run streams that change at `tau = W + 1`.
    #[serde(default)]
    pub power: bool,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: usize,
}

impl ExperimentConfig {
    pub fn new(problem: Problem, n: usize, calibration: CalibrationConfig) -> Self {
        Self {
            problem,
            n,
            calibration,
            algorithm: Algorithm::Calm,
            mode: StartMode::FromWindow,
            configs: 1,
            runs: 100,
            timeout_factor: default_timeout_factor(),
            power: false,
            max_attempts: default_max_attempts(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.calibration.validate()?;
        if self.configs == 0 || self.runs == 0 {
            return Err(Error::input("configs and runs must be positive"));
        }
        if !(self.timeout_factor.is_finite() && self.timeout_factor > 0.0) {
            return Err(Error::input("timeout factor must be positive"));
        }
        if self.max_attempts == 0 {
            return Err(Error::input("max attempts must be positive"));
        }
        Ok(())
    }

    /// Largest runtime before a run counts as timed out.
    pub fn timeout_cap(&self) -> u64 {
        (self.timeout_factor * self.calibration.ert).ceil() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerReport {
    /// Change point (1-based stream time).
    pub tau: u64,
    /// `T - tau` for runs with `T >= tau`.
    pub delays: Vec<u64>,
    /// Runs that fired before the change.
    pub false_alarms: usize,
    pub timeouts: usize,
    /// Absent when every change run ended in a false alarm or a timeout.
    pub add: Option<f64>,
    /// `(ART - ADD) / ART` against the no-change ART of the same configurations.
    pub reduction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigReport {
    pub index: usize,
    pub sigma: Option<f64>,
    pub thresholds: Vec<f64>,
    pub survivor_counts: Vec<usize>,
    pub art: f64,
    pub completed: usize,
    pub timeouts: usize,
    pub add: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub problem: Problem,
    pub algorithm: Algorithm,
    pub estimator: EstimatorKind,
    pub mode: StartMode,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "W")]
    pub window: usize,
    pub ert: f64,
    pub alpha: f64,
    #[serde(rename = "B")]
    pub bootstraps: usize,
    pub configs: usize,
    pub runs_per_config: usize,
    pub seed: u64,
    pub timeout_cap: u64,
    /// Completed no-change runtimes in (configuration, run) order.
    pub runtimes: Vec<u64>,
    pub timeouts: usize,
    /// Mean of completed runtimes.
    pub art: f64,
    /// Mean with timed-out runs counted at the cap: a lower bound on the
    /// uncensored ART.
    pub art_censored: f64,
    pub miscalibration: f64,
    /// KS distance between the runtimes and the geometric law with mean ART.
    pub ks_distance: f64,
    pub ks_critical_1pct: f64,
    pub qq: Vec<QqPoint>,
    pub hazard: Vec<HazardPoint>,
    pub power: Option<PowerReport>,
    pub per_config: Vec<ConfigReport>,
}

impl ExperimentReport {
    /// Recomputes the summary figures from the stored runtimes.
    pub fn recompute(&self) -> (f64, f64, Option<f64>) {
        let art = mean_u64(&self.runtimes);
        let mis = miscalibration(art, self.ert);
        let red = self
            .power
            .as_ref()
            .filter(|p| !p.delays.is_empty())
            .map(|p| reduction(art, mean_u64(&p.delays)));
        (art, mis, red)
    }
}

/// Runs `runs` copies of `proto` on independent streams of `problem`
/// changing at `tau`. Run `r` reads stream `(seed, STREAM, offset + r)`;
/// in from-start mode the prepend draw uses `(seed, PREPEND, offset + r)`.
/// `cap` bounds the number of tests per run.
#[allow(clippy::too_many_arguments)]
pub fn simulate_runs(
    proto: &Detector,
    pool: &[&[f64]],
    mode: StartMode,
    problem: Problem,
    tau: Option<u64>,
    runs: usize,
    cap: u64,
    seed: u64,
    offset: u64,
    max_attempts: usize,
) -> Result<Vec<RunOutcome>> {
    let warmup = match mode {
        StartMode::FromWindow => proto.window_size() as u64 - 1,
        StartMode::FromStart => 0,
    };
    (0..runs as u64)
        .into_par_iter()
        .map(|r| {
            let mut det = proto.clone();
            if mode == StartMode::FromStart {
                let mut pr = rng::stream(seed, domain::PREPEND, offset + r);
                det = det.prepend(pool, &mut pr, max_attempts)?;
            }
            let stream = StreamModel::new(problem, tau, rng::stream(seed, domain::STREAM, offset + r));
            det.run_to_detection(stream, cap + warmup)
        })
        .collect()
}

const POWER_OFFSET: u64 = 1 << 32;

pub fn run_calibration_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut cfg = cfg.clone();
    cfg.power = false;
    run_experiment(&cfg)
}

pub fn run_power_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut cfg = cfg.clone();
    cfg.power = true;
    run_experiment(&cfg)
}

/// No-change runs for every configuration, plus change runs when
/// `cfg.power` is set. Change runs always use from-window mode.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let cal = &cfg.calibration;
    let w = cal.window;
    let cap = cfg.timeout_cap();
    let tau = w as u64 + 1;
    let master = cal.seed;

    let mut runtimes = Vec::new();
    let mut censored = Vec::new();
    let mut delays = Vec::new();
    let mut false_alarms = 0;
    let mut power_timeouts = 0;
    let mut per_config = Vec::with_capacity(cfg.configs);

    for c in 0..cfg.configs {
        let seed_c = derive_seed(master, c as u64);
        let mut rr = rng::stream(master, domain::REFERENCE, c as u64);
        let reference = sample_problem(cfg.problem, Phase::Pre, cfg.n, &mut rr)?;
        let mut cal_c = cal.clone();
        cal_c.seed = seed_c;
        let schedule = configure(&reference, &cal_c, cfg.algorithm)?;
        let proto = Detector::from_window(&schedule, &reference)?;
        let pool = reference.select(&schedule.holdout_indices)?;

        let outcomes = simulate_runs(
            &proto,
            &pool,
            cfg.mode,
            cfg.problem,
            None,
            cfg.runs,
            cap,
            seed_c,
            0,
            cfg.max_attempts,
        )?;
        let mut done = Vec::new();
        let mut timeouts = 0;
        for o in &outcomes {
            match o {
                RunOutcome::Detection(e) => done.push(e.post_warmup_runtime),
                RunOutcome::Timeout { .. } => timeouts += 1,
            }
        }

        let mut add = None;
        if cfg.power {
            let outcomes = simulate_runs(
                &proto,
                &pool,
                StartMode::FromWindow,
                cfg.problem,
                Some(tau),
                cfg.runs,
                cap,
                seed_c,
                POWER_OFFSET,
                cfg.max_attempts,
            )?;
            let mut local = Vec::new();
            for o in outcomes {
                match o {
                    RunOutcome::Detection(e) if e.runtime >= tau => local.push(e.runtime - tau),
                    RunOutcome::Detection(_) => false_alarms += 1,
                    RunOutcome::Timeout { .. } => power_timeouts += 1,
                }
            }
            add = (!local.is_empty()).then(|| mean_u64(&local));
            delays.extend(local);
        }

        log::info!(
            "configuration {}/{}: {} runs, {} timeouts, ART {:.2}",
            c + 1,
            cfg.configs,
            done.len(),
            timeouts,
            mean_u64(&done)
        );
        per_config.push(ConfigReport {
            index: c,
            sigma: schedule.kernel.and_then(|k| match k.sigma {
                Bandwidth::Fixed(s) => Some(s),
                Bandwidth::Median => None,
            }),
            thresholds: schedule.thresholds.clone(),
            survivor_counts: schedule.survivor_counts.clone(),
            art: if done.is_empty() { cap as f64 } else { mean_u64(&done) },
            completed: done.len(),
            timeouts,
            add,
        });
        runtimes.extend(done);
        censored.extend(std::iter::repeat_n(cap, timeouts));
    }

    let timeouts = censored.len();
    if timeouts > 0 {
        log::warn!("{timeouts} runs reached the cap of {cap} tests and are excluded from ART");
    }
    let total = (runtimes.len() + timeouts) as f64;
    let art_censored =
        (runtimes.iter().sum::<u64>() as f64 + (timeouts as u64 * cap) as f64) / total;
    let art = if runtimes.is_empty() {
        art_censored
    } else {
        mean_u64(&runtimes)
    };
    let theta = (1.0 / art).min(1.0);
    let max_k = (3 * w as u64).max(31);

    let power = cfg.power.then(|| {
        let add = (!delays.is_empty()).then(|| mean_u64(&delays));
        PowerReport {
            tau,
            false_alarms,
            timeouts: power_timeouts,
            add,
            reduction: add.map(|a| reduction(art, a)),
            delays,
        }
    });

    Ok(ExperimentReport {
        problem: cfg.problem,
        algorithm: cfg.algorithm,
        estimator: cal.estimator,
        mode: cfg.mode,
        n: cfg.n,
        window: w,
        ert: cal.ert,
        alpha: cal.alpha(),
        bootstraps: cal.bootstraps,
        configs: cfg.configs,
        runs_per_config: cfg.runs,
        seed: master,
        timeout_cap: cap,
        miscalibration: miscalibration(art, cal.ert),
        ks_distance: ks_geometric(&runtimes, theta),
        ks_critical_1pct: ks_critical_1pct(runtimes.len().max(1)),
        qq: geometric_qq(&runtimes, theta),
        hazard: hazard(&runtimes, &censored, max_k),
        art,
        art_censored,
        timeouts,
        runtimes,
        power,
        per_config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel_metrics::{KernelSpec, WindowStatistic};

    #[derive(Clone)]
    struct Fixed(usize, usize, f64);

    impl WindowStatistic for Fixed {
        fn window_size(&self) -> usize {
            self.0
        }
        fn filled(&self) -> usize {
            self.1
        }
        fn push(&mut self, _z: &[f64]) -> Result<Option<f64>> {
            self.1 = (self.1 + 1).min(self.0);
            Ok(self.statistic())
        }
        fn statistic(&self) -> Option<f64> {
            (self.1 == self.0).then_some(self.2)
        }
        fn clear(&mut self) {
            self.1 = 0;
        }
        fn box_clone(&self) -> Box<dyn WindowStatistic> {
            Box::new(self.clone())
        }
    }

    #[test]
    fn always_firing_schedule_gives_first_test_time() {
        let w = 5;
        let proto = Detector::new(vec![f64::NEG_INFINITY; w], Box::new(Fixed(w, 0, 0.0))).unwrap();
        let out = simulate_runs(&proto, &[], StartMode::FromWindow, Problem::D3, None, 1, 10, 1, 0, 1)
            .unwrap();
        match out[0] {
            RunOutcome::Detection(e) => {
                assert_eq!(e.runtime, w as u64);
                assert_eq!(e.post_warmup_runtime, 1);
            }
            other => panic!("{other:?}"),
        }
        let never = Detector::new(vec![f64::INFINITY; w], Box::new(Fixed(w, 0, 0.0))).unwrap();
        let out = simulate_runs(&never, &[], StartMode::FromWindow, Problem::D3, None, 2, 10, 1, 0, 1)
            .unwrap();
        assert_eq!(out, vec![RunOutcome::Timeout { steps: 14 }; 2]);
    }

    fn small_config(problem: Problem) -> ExperimentConfig {
        let mut cal = CalibrationConfig::new(5, 20.0, 2000, 3);
        cal.kernel = KernelSpec::rbf_median();
        let mut cfg = ExperimentConfig::new(problem, 100, cal);
        cfg.configs = 2;
        cfg.runs = 100;
        cfg
    }

    #[test]
    fn report_is_consistent_and_reproducible() {
        let mut cfg = small_config(Problem::D3);
        cfg.power = true;
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let (art, mis, red) = a.recompute();
        assert_eq!(art, a.art);
        assert_eq!(mis, a.miscalibration);
        assert_eq!(red, a.power.as_ref().and_then(|p| p.reduction));
        assert_eq!(a.runtimes.len() + a.timeouts, 200);
        assert!(a.runtimes.iter().all(|&t| t >= 1));
        assert!(a.miscalibration >= 0.0);
        let p = a.power.unwrap();
        assert_eq!(p.delays.len() + p.false_alarms + p.timeouts, 200);
        assert!(p.reduction.unwrap() <= 1.0);
        let text = serde_json::to_string(&b).unwrap();
        let back: ExperimentReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn from_start_mode_runs() {
        let mut cfg = small_config(Problem::D4);
        cfg.mode = StartMode::FromStart;
        cfg.configs = 1;
        let r = run_experiment(&cfg).unwrap();
        assert_eq!(r.runtimes.len() + r.timeouts, 100);
        assert_eq!(r.per_config.len(), 1);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let cfg = small_config(Problem::D3);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_calibration_experiment(&cfg).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn invalid_counts_are_rejected() {
        let mut cfg = small_config(Problem::D1);
        cfg.runs = 0;
        assert!(matches!(run_experiment(&cfg), Err(Error::InvalidInput(_))));
    }
}

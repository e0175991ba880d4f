use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::CommandFactory;
use serde_json::{json, Value};

use seqdrift_core::calibration::{configure, Algorithm, CalibrationConfig, DEFAULT_BOOTSTRAPS};
use seqdrift_core::detector::{Detector, StartMode, StepOutcome};
use seqdrift_core::io::{
    load_schedule, read_reference_csv, save_json, write_bias_csv, write_bias_rows,
    write_hazard_csv, write_qq_csv, write_runtimes_csv, ObservationReader, RunConfigFile,
};
use seqdrift_core::kernel_metrics::{Bandwidth, KernelSpec};
use seqdrift_core::rng::{self, domain};
use seqdrift_core::simbench::{
    run_experiment, window_sharing_bias_study, BiasStudyConfig, ExperimentConfig,
};
use seqdrift_core::Error;

use crate::{
    BiasStudyArgs, Cli, Command, ConfigureArgs, OnOff, RunArgs, SimulateArgs, EXIT_NUMERIC,
    EXIT_TIMEOUT, EXIT_USAGE,
};

/// A failure with the command it happened in.
struct Failure {
    command: &'static str,
    error: Error,
    usage: Option<String>,
}

type CmdResult = Result<ExitCode, Failure>;

trait Context<T> {
    fn during(self, command: &'static str) -> Result<T, Failure>;
}

impl<T> Context<T> for seqdrift_core::Result<T> {
    fn during(self, command: &'static str) -> Result<T, Failure> {
        self.map_err(|error| Failure {
            command,
            error,
            usage: None,
        })
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Calibration(_) | Error::State(_) => EXIT_NUMERIC,
        _ => EXIT_USAGE,
    }
}

fn emit_error(code: &str, message: &str, context: Value) {
    let record = json!({ "code": code, "message": message, "context": context });
    eprintln!("{record}");
}

pub fn report_usage(e: &clap::Error) {
    emit_error(
        "usage",
        e.kind().as_str().unwrap_or("invalid arguments"),
        json!({ "detail": e.to_string().trim_end() }),
    );
    let _ = e.print();
}

/// A usage error for `subcommand` carrying its rendered help text.
fn usage(command: &'static str, message: String) -> Failure {
    let mut cmd = Cli::command();
    cmd.build();
    let help = cmd
        .find_subcommand_mut(command)
        .map(|c| c.render_usage().to_string())
        .unwrap_or_default();
    Failure {
        command,
        error: Error::InvalidInput(message),
        usage: Some(help),
    }
}

pub fn dispatch(command: Command) -> ExitCode {
    let result = match command {
        Command::Configure(a) => cmd_configure(a),
        Command::Run(a) => cmd_run(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::BiasStudy(a) => cmd_bias_study(a),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            emit_error(
                f.error.code(),
                &f.error.to_string(),
                json!({ "command": f.command }),
            );
            if let Some(u) = f.usage {
                eprintln!("{u}");
            }
            ExitCode::from(exit_code(&f.error))
        }
    }
}

fn load_config(path: &Option<PathBuf>, command: &'static str) -> Result<RunConfigFile, Failure> {
    match path {
        Some(p) => RunConfigFile::load(p).during(command),
        None => Ok(RunConfigFile::default()),
    }
}

fn cmd_configure(a: ConfigureArgs) -> CmdResult {
    const CMD: &str = "configure";
    let file = load_config(&a.config, CMD)?;
    let reference = a
        .reference
        .or(file.reference.clone())
        .ok_or_else(|| usage(CMD, "missing --ref".into()))?;
    let out = a
        .out
        .or(file.schedule.clone())
        .ok_or_else(|| usage(CMD, "missing --out".into()))?;
    let window = a
        .window
        .or(file.window)
        .ok_or_else(|| usage(CMD, "missing --window".into()))?;
    let ert = a
        .ert
        .or(file.ert)
        .ok_or_else(|| usage(CMD, "missing --ert".into()))?;

    let mut cfg = CalibrationConfig::new(
        window,
        ert,
        a.bootstraps.or(file.bootstraps).unwrap_or(DEFAULT_BOOTSTRAPS),
        a.seed.or(file.seed).unwrap_or(0),
    );
    cfg.estimator = a.estimator.or(file.estimator).unwrap_or(cfg.estimator);
    cfg.kernel = match (a.sigma, file.kernel) {
        (Some(Bandwidth::Fixed(s)), _) => KernelSpec::rbf(s),
        (Some(Bandwidth::Median), _) => KernelSpec::rbf_median(),
        (None, Some(k)) => k,
        (None, None) => KernelSpec::rbf_median(),
    };
    cfg.min_survivors = a.min_survivors.or(file.min_survivors).unwrap_or(cfg.min_survivors);
    cfg.expectation_samples = a
        .expectation_samples
        .or(file.expectation_samples)
        .unwrap_or(cfg.expectation_samples);
    let algorithm = a.algorithm.or(file.algorithm).unwrap_or(Algorithm::Calm);
    cfg.validate().during(CMD)?;

    let data = read_reference_csv(&reference).during(CMD)?;
    let start = Instant::now();
    let schedule = configure(&data, &cfg, algorithm).during(CMD)?;
    save_json(&out, &schedule).during(CMD)?;
    println!(
        "{}: N={} d={} W={} M={} thresholds={} survivors={:?} wall={:.3}s -> {}",
        algorithm.as_str(),
        schedule.n,
        schedule.d,
        schedule.window,
        schedule.m,
        schedule.thresholds.len(),
        schedule.survivor_counts,
        start.elapsed().as_secs_f64(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn open_input(spec: &str) -> io::Result<Box<dyn BufRead>> {
    if spec == "-" {
        Ok(Box::new(io::stdin().lock()))
    } else {
        Ok(Box::new(BufReader::new(File::open(spec)?)))
    }
}

struct Output {
    inner: Box<dyn Write>,
    flush_each: bool,
}

impl Output {
    fn open(spec: &str) -> io::Result<Self> {
        if spec == "-" {
            Ok(Self {
                inner: Box::new(io::stdout().lock()),
                flush_each: true,
            })
        } else {
            Ok(Self {
                inner: Box::new(BufWriter::new(File::create(spec)?)),
                flush_each: false,
            })
        }
    }

    fn record(&mut self, v: &Value) -> io::Result<()> {
        writeln!(self.inner, "{v}")?;
        if self.flush_each {
            self.inner.flush()?;
        }
        Ok(())
    }
}

fn cmd_run(a: RunArgs) -> CmdResult {
    const CMD: &str = "run";
    let file = load_config(&a.config, CMD)?;
    let schedule_path = a
        .schedule
        .or(file.schedule.clone())
        .ok_or_else(|| usage(CMD, "missing --schedule".into()))?;
    let reference_path = a
        .reference
        .or(file.reference.clone())
        .ok_or_else(|| usage(CMD, "missing --ref".into()))?;
    let mode = a.mode.or(file.mode).unwrap_or(StartMode::FromWindow);
    let max_steps = a.max_steps.or(file.max_steps).unwrap_or(u64::MAX);

    let schedule = load_schedule(&schedule_path).during(CMD)?;
    let data = read_reference_csv(&reference_path).during(CMD)?;
    let mut detector = match mode {
        StartMode::FromWindow => Detector::from_window(&schedule, &data).during(CMD)?,
        StartMode::FromStart => {
            let seed = a.seed.unwrap_or(schedule.seed);
            let mut r = rng::stream(seed, domain::PREPEND, 0);
            Detector::from_start(&schedule, &data, &mut r, a.max_attempts).during(CMD)?
        }
    };

    let input = open_input(&a.input).map_err(Error::from).during(CMD)?;
    let mut out = Output::open(&a.out).map_err(Error::from).during(CMD)?;
    let mut steps = 0u64;
    let mut detection = None;
    for row in ObservationReader::with_dim(input, data.dim()) {
        if steps >= max_steps {
            break;
        }
        let row = row.during(CMD)?;
        let outcome = detector.step(&row).during(CMD)?;
        steps += 1;
        let fired = matches!(outcome, StepOutcome::Detection(_));
        out.record(&json!({
            "t": detector.time(),
            "stat": outcome.statistic(),
            "threshold": outcome.threshold(),
            "detection": fired,
        }))
        .map_err(Error::from)
        .during(CMD)?;
        if let StepOutcome::Detection(e) = outcome {
            detection = Some(e);
            break;
        }
    }

    let summary = match detection {
        Some(e) => json!({ "summary": {
            "outcome": "detection",
            "mode": mode.as_str(),
            "t": e.t,
            "runtime": e.runtime,
            "post_warmup_runtime": e.post_warmup_runtime,
            "stat": e.statistic,
            "threshold": e.threshold,
            "init_attempts": detector.init_attempts(),
        }}),
        None => json!({ "summary": {
            "outcome": "timeout",
            "mode": mode.as_str(),
            "steps": steps,
            "init_attempts": detector.init_attempts(),
        }}),
    };
    out.record(&summary).map_err(Error::from).during(CMD)?;
    out.inner.flush().map_err(Error::from).during(CMD)?;
    Ok(if detection.is_some() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_TIMEOUT)
    })
}

fn ert_label(ert: f64) -> String {
    format!("{ert}").replace('.', "_")
}

fn cmd_simulate(a: SimulateArgs) -> CmdResult {
    const CMD: &str = "simulate";
    if a.ert.is_empty() {
        return Err(usage(CMD, "--ert needs at least one value".into()));
    }
    fs::create_dir_all(&a.out).map_err(Error::from).during(CMD)?;
    for &ert in &a.ert {
        let mut cal = CalibrationConfig::new(a.window, ert, a.bootstraps, a.seed);
        cal.estimator = a.estimator;
        cal.kernel = match a.sigma {
            Bandwidth::Fixed(s) => KernelSpec::rbf(s),
            Bandwidth::Median => KernelSpec::rbf_median(),
        };
        let mut cfg = ExperimentConfig::new(a.problem, a.n, cal);
        cfg.algorithm = a.algorithm;
        cfg.mode = a.mode;
        cfg.configs = a.configs;
        cfg.runs = a.runs;
        cfg.power = a.power == OnOff::On;
        cfg.timeout_factor = a.timeout_factor;

        let start = Instant::now();
        let report = run_experiment(&cfg).during(CMD)?;
        let dir = a
            .out
            .join(format!("{}_ert{}", a.problem.as_str(), ert_label(ert)));
        fs::create_dir_all(&dir).map_err(Error::from).during(CMD)?;
        write_outputs(&dir, &report).during(CMD)?;

        let mut line = format!(
            "{} ERT={ert}: ART={:.3} miscalibration={:.4} ks={:.4} timeouts={}",
            a.problem.as_str(),
            report.art,
            report.miscalibration,
            report.ks_distance,
            report.timeouts
        );
        if let Some(p) = &report.power {
            line.push_str(&format!(
                " ADD={} reduction={}",
                p.add.map_or("n/a".into(), |v| format!("{v:.3}")),
                p.reduction.map_or("n/a".into(), |v| format!("{v:.4}"))
            ));
        }
        println!(
            "{line} wall={:.1}s -> {}",
            start.elapsed().as_secs_f64(),
            dir.display()
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn write_outputs(dir: &Path, report: &seqdrift_core::simbench::ExperimentReport) -> seqdrift_core::Result<()> {
    save_json(&dir.join("report.json"), report)?;
    write_runtimes_csv(&dir.join("runtimes.csv"), report)?;
    write_qq_csv(&dir.join("qq.csv"), report)?;
    write_hazard_csv(&dir.join("hazard.csv"), report)
}

fn cmd_bias_study(a: BiasStudyArgs) -> CmdResult {
    const CMD: &str = "bias-study";
    if let Some(&d) = a.dims.iter().find(|&&d| d == 0) {
        return Err(usage(CMD, format!("--dims entries must be positive; got {d}")));
    }
    let mut rows = Vec::with_capacity(a.dims.len());
    for &dim in &a.dims {
        let mut cfg = BiasStudyConfig::new(dim, a.seed);
        cfg.n = a.n;
        cfg.window = a.window;
        cfg.bootstraps = a.bootstraps;
        cfg.estimator = a.estimator;
        cfg.kernel = match a.sigma {
            Bandwidth::Fixed(s) => KernelSpec::rbf(s),
            Bandwidth::Median => KernelSpec::rbf_median(),
        };
        let start = Instant::now();
        let r = window_sharing_bias_study(&cfg).during(CMD)?;
        log::info!(
            "dim {dim}: with {:.4}, without {:.4} ({:.1}s)",
            r.ks_with_replacement,
            r.ks_without_replacement,
            start.elapsed().as_secs_f64()
        );
        rows.push(r);
    }
    if a.out == "-" {
        let mut w = io::stdout().lock();
        write_bias_rows(&mut w, &rows).during(CMD)?;
    } else {
        write_bias_csv(Path::new(&a.out), &rows).during(CMD)?;
    }
    Ok(ExitCode::SUCCESS)
}

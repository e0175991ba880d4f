//! `seqdrift`: calibrate, operate and benchmark sequential kernel change
//! detectors from the command line.
//!
//! Exit status: 0 on success or detection, 2 on timeout, 3 on usage, input
//! or initialization errors, 4 on calibration or numerical failures. Errors
//! are printed to stderr as one JSON object `{code, message, context}`.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use seqdrift_core::calibration::Algorithm;
use seqdrift_core::detector::StartMode;
use seqdrift_core::kernel_metrics::{Bandwidth, EstimatorKind};
use seqdrift_core::simbench::Problem;

pub const EXIT_TIMEOUT: u8 = 2;
pub const EXIT_USAGE: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "seqdrift", version, about = "Sequential kernel change detection with calibrated thresholds")]
pub struct Cli {
    /// Worker threads for calibration and simulation (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Calibrate a threshold schedule from a reference CSV.
    Configure(ConfigureArgs),
    /// Operate a calibrated detector on a stream of observations.
    Run(RunArgs),
    /// Run calibration (and optionally power) experiments on synthetic problems.
    Simulate(SimulateArgs),
    /// Compare with- and without-replacement bootstraps on Gaussian data.
    BiasStudy(BiasStudyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum KernelName {
    Rbf,
}

#[derive(Debug, Args)]
pub struct ConfigureArgs {
    /// Headerless CSV of reference observations.
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub window: Option<usize>,
    /// Desired expected runtime; alpha = 1 / ert.
    #[arg(long)]
    pub ert: Option<f64>,
    #[arg(long)]
    pub bootstraps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub kernel: Option<KernelName>,
    /// `median` or a positive number.
    #[arg(long)]
    pub sigma: Option<Bandwidth>,
    #[arg(long)]
    pub algorithm: Option<Algorithm>,
    #[arg(long)]
    pub estimator: Option<EstimatorKind>,
    #[arg(long)]
    pub min_survivors: Option<usize>,
    #[arg(long)]
    pub expectation_samples: Option<usize>,
    /// Schedule output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub schedule: Option<PathBuf>,
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    /// Observation stream, one comma-separated row per line; `-` for stdin.
    #[arg(long, default_value = "-")]
    pub input: String,
    #[arg(long)]
    pub mode: Option<StartMode>,
    #[arg(long)]
    pub max_steps: Option<u64>,
    /// JSONL event output; `-` for stdout.
    #[arg(long, default_value = "-")]
    pub out: String,
    /// Seed for the prepend draw in from-start mode (default: the schedule seed).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = seqdrift_core::detector::DEFAULT_MAX_ATTEMPTS)]
    pub max_attempts: usize,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub problem: Problem,
    /// Comma-separated expected runtimes.
    #[arg(long, value_delimiter = ',', required = true)]
    pub ert: Vec<f64>,
    /// Reference set size.
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub window: usize,
    #[arg(long, default_value_t = 20_000)]
    pub bootstraps: usize,
    #[arg(long, default_value_t = 10)]
    pub configs: usize,
    #[arg(long, default_value_t = 500)]
    pub runs: usize,
    #[arg(long, value_enum, default_value_t = OnOff::Off)]
    pub power: OnOff,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "from-window")]
    pub mode: StartMode,
    #[arg(long, default_value = "calm")]
    pub algorithm: Algorithm,
    #[arg(long, default_value = "mmd")]
    pub estimator: EstimatorKind,
    #[arg(long, default_value = "median")]
    pub sigma: Bandwidth,
    #[arg(long, default_value_t = 100.0)]
    pub timeout_factor: f64,
}

#[derive(Debug, Args)]
pub struct BiasStudyArgs {
    /// Comma-separated dimensions.
    #[arg(long, value_delimiter = ',', required = true)]
    pub dims: Vec<usize>,
    #[arg(long, default_value = "mmd")]
    pub estimator: EstimatorKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV output; `-` for stdout.
    #[arg(long, default_value = "-")]
    pub out: String,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 25)]
    pub window: usize,
    #[arg(long, default_value_t = 25_000)]
    pub bootstraps: usize,
    #[arg(long, default_value = "median")]
    pub sigma: Bandwidth,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            commands::report_usage(&e);
            return ExitCode::from(EXIT_USAGE);
        }
    };

    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }

    commands::dispatch(cli.command)
}

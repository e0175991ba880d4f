//! Synthetic benchmarks: problem generators, calibration and power
//! experiments, runtime diagnostics, and the window-sharing bias study.

mod bias;
mod experiment;
mod metrics;
mod problems;

pub use bias::{
    bias_samples, estimator_samples, mmd_samples_reference_path, window_sharing_bias_study,
    BiasSamples, BiasStudyConfig, BiasStudyResult,
};
pub use experiment::{
    run_calibration_experiment, run_experiment, run_power_experiment, simulate_runs,
    ConfigReport, ExperimentConfig, ExperimentReport, PowerReport,
};
pub use metrics::{
    geometric_cdf, geometric_qq, geometric_quantile, hazard, ks_critical_1pct, ks_geometric,
    ks_two_sample, mean_u64, miscalibration, reduction, wilson_interval, HazardPoint, QqPoint,
    Z_99,
};
pub use problems::{sample_problem, Phase, Problem, StreamModel};

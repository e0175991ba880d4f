//! Sequential multivariate change detection with simulation-calibrated,
//! time-varying thresholds.
//!
//! The crate is organised around the life cycle of a detector:
//!
//! * [`kernel_metrics`]: kernels, two-sample distance estimators and the
//!   cached kernel sums that make the quadratic-time MMD estimator cheap to
//!   bootstrap (`O(N^2 + NB)`) and cheap to operate (`O(N)` per step).
//! * [`calibration`]: bootstrap configuration of thresholds so that, with no
//!   change present, detection times are geometric with a chosen mean.
//! * [`detector`]: the streaming state machine used during operation.
//! * [`simbench`]: synthetic problems, experiments and runtime diagnostics.
//! * [`io`]: CSV ingestion, schedule/report persistence and run configs.

pub mod calibration;
pub mod data;
pub mod detector;
pub mod error;
pub mod io;
pub mod kernel_metrics;
pub mod rng;
pub mod simbench;

pub use calibration::{
    configure, configure_calm, configure_lsdd_inc_baseline, configure_time_invariant, Algorithm,
    CalibrationConfig, ThresholdSchedule,
};
pub use data::ReferenceSet;
pub use detector::{DetectionEvent, Detector, RunOutcome, StartMode, StepOutcome};
pub use error::{Error, Result};
pub use kernel_metrics::{
    mean_difference_statistic, median_heuristic, mmd2_batch, Bandwidth, EstimatorKind, Kernel,
    KernelSpec, MmdCache, RbfKernel,
};

//! Kernels, two-sample distance estimators and incremental kernel sums.

mod estimators;
mod gram;
mod kernel;
mod partition;
mod stream;

pub use estimators::{
    mean_difference_statistic, mmd2_batch, mmd2_from_sums, DistanceEstimator, EstimatorKind,
    MeanDifference, Mmd,
};
pub use gram::GramMatrix;
pub use kernel::{
    median_heuristic, Bandwidth, CountingKernel, Kernel, KernelKind, KernelSpec, RbfKernel,
};
pub use partition::{partitioned_sums, offdiag_sum, KernelMatrixView};
pub use stream::{MeanDiffStream, MmdCache, WindowStatistic, RESUM_INTERVAL};

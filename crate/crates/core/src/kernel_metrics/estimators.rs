use serde::{Deserialize, Serialize};

use super::kernel::Kernel;
use crate::data::check_dim;
use crate::error::{Error, Result};

/// Which two-sample statistic a detector uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimatorKind {
    /// Quadratic-time unbiased estimate of squared MMD.
    #[serde(rename = "mmd")]
    Mmd,
    /// Euclidean norm of the difference in sample means.
    #[serde(rename = "mean-diff")]
    MeanDiff,
}

impl EstimatorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorKind::Mmd => "mmd",
            EstimatorKind::MeanDiff => "mean-diff",
        }
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "mmd" => Ok(EstimatorKind::Mmd),
            "mean-diff" => Ok(EstimatorKind::MeanDiff),
            other => Err(format!("unknown estimator `{other}` (expected mmd or mean-diff)")),
        }
    }
}

/// A two-sample distance statistic `D(x, y)`.
pub trait DistanceEstimator: Send + Sync {
    fn distance(&self, x: &[&[f64]], y: &[&[f64]]) -> Result<f64>;
}

/// Squared-MMD estimator over a kernel.
#[derive(Debug, Clone)]
pub struct Mmd<K>(pub K);

impl<K: Kernel> DistanceEstimator for Mmd<K> {
    fn distance(&self, x: &[&[f64]], y: &[&[f64]]) -> Result<f64> {
        mmd2_batch(x, y, &self.0)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MeanDifference;

impl DistanceEstimator for MeanDifference {
    fn distance(&self, x: &[&[f64]], y: &[&[f64]]) -> Result<f64> {
        mean_difference_statistic(x, y)
    }
}

fn common_dim<R: AsRef<[f64]>>(x: &[R], y: &[R]) -> Result<usize> {
    let dim = x
        .first()
        .or(y.first())
        .map(|r| r.as_ref().len())
        .unwrap_or(0);
    for r in x.iter().chain(y) {
        check_dim(dim, r.as_ref())?;
    }
    Ok(dim)
}

/// Sum of `k(s_i, s_j)` over ordered pairs `i != j`, row-major.
pub(crate) fn within_offdiag<R: AsRef<[f64]>, K: Kernel>(s: &[R], kernel: &K) -> f64 {
    let mut total = 0.0;
    for i in 0..s.len() {
        let mut row = 0.0;
        for j in 0..i {
            row += kernel.eval(s[i].as_ref(), s[j].as_ref());
        }
        total += row;
    }
    2.0 * total
}

pub(crate) fn cross_sum<R: AsRef<[f64]>, K: Kernel>(x: &[R], y: &[R], kernel: &K) -> f64 {
    let mut total = 0.0;
    for xi in x {
        let mut row = 0.0;
        for yj in y {
            row += kernel.eval(xi.as_ref(), yj.as_ref());
        }
        total += row;
    }
    total
}

/// Combines block sums into the squared-MMD estimate for sample sizes `m`, `w`.
#[inline]
pub fn mmd2_from_sums(ref_offdiag: f64, test_offdiag: f64, cross: f64, m: usize, w: usize) -> f64 {
    let (mf, wf) = (m as f64, w as f64);
    ref_offdiag / (mf * (mf - 1.0)) + test_offdiag / (wf * (wf - 1.0)) - 2.0 * cross / (mf * wf)
}

/// Unbiased quadratic-time estimate of squared MMD between samples `x` and `y`.
///
/// The result may be negative. It is exactly symmetric in its arguments:
/// the pair is put into a canonical order before summation.
pub fn mmd2_batch<A, B, K>(x: &[A], y: &[B], kernel: &K) -> Result<f64>
where
    A: AsRef<[f64]>,
    B: AsRef<[f64]>,
    K: Kernel,
{
    let x: Vec<&[f64]> = x.iter().map(AsRef::as_ref).collect();
    let y: Vec<&[f64]> = y.iter().map(AsRef::as_ref).collect();
    let (x, y) = (x.as_slice(), y.as_slice());
    if x.len() < 2 || y.len() < 2 {
        return Err(Error::input(format!(
            "MMD estimate needs at least 2 observations per sample; got {} and {}",
            x.len(),
            y.len()
        )));
    }
    common_dim(x, y)?;
    let (x, y) = if canonical_first(x, y) { (x, y) } else { (y, x) };
    let kxx = within_offdiag(x, kernel);
    let kyy = within_offdiag(y, kernel);
    let kxy = cross_sum(x, y, kernel);
    Ok(mmd2_from_sums(kxx, kyy, kxy, x.len(), y.len()))
}

fn canonical_first<R: AsRef<[f64]>>(x: &[R], y: &[R]) -> bool {
    use std::cmp::Ordering;
    match x.len().cmp(&y.len()) {
        Ordering::Less => return true,
        Ordering::Greater => return false,
        Ordering::Equal => {}
    }
    let xs = x.iter().flat_map(|r| r.as_ref().iter());
    let ys = y.iter().flat_map(|r| r.as_ref().iter());
    for (a, b) in xs.zip(ys) {
        match a.total_cmp(b) {
            Ordering::Less => return true,
            Ordering::Greater => return false,
            Ordering::Equal => {}
        }
    }
    true
}

/// Euclidean norm of `mean(x) - mean(y)`.
pub fn mean_difference_statistic<A: AsRef<[f64]>, B: AsRef<[f64]>>(x: &[A], y: &[B]) -> Result<f64> {
    let x: Vec<&[f64]> = x.iter().map(AsRef::as_ref).collect();
    let y: Vec<&[f64]> = y.iter().map(AsRef::as_ref).collect();
    let (x, y) = (x.as_slice(), y.as_slice());
    if x.is_empty() || y.is_empty() {
        return Err(Error::input("mean difference needs two nonempty samples"));
    }
    let dim = common_dim(x, y)?;
    let mx = mean(x, dim);
    let my = mean(y, dim);
    Ok(mx
        .iter()
        .zip(&my)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

pub(crate) fn mean<R: AsRef<[f64]>>(s: &[R], dim: usize) -> Vec<f64> {
    let mut acc = vec![0.0; dim];
    for r in s {
        for (a, v) in acc.iter_mut().zip(r.as_ref()) {
            *a += v;
        }
    }
    let n = s.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

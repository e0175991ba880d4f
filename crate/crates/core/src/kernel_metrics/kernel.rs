use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::check_dim;
use crate::error::{Error, Result};

/// A symmetric similarity function on observations.
pub trait Kernel: Send + Sync {
    fn eval(&self, x: &[f64], y: &[f64]) -> f64;
}

impl<K: Kernel + ?Sized> Kernel for &K {
    #[inline]
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        (**self).eval(x, y)
    }
}

impl<K: Kernel + ?Sized> Kernel for Arc<K> {
    #[inline]
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        (**self).eval(x, y)
    }
}

/// Gaussian RBF kernel `k(x, y) = exp(-||x - y||^2 / (2 sigma^2))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbfKernel {
    sigma: f64,
    neg_inv_two_sigma_sq: f64,
}

impl RbfKernel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::calibration(format!(
                "RBF bandwidth must be finite and > 0; got {sigma}"
            )));
        }
        Ok(Self {
            sigma,
            neg_inv_two_sigma_sq: -1.0 / (2.0 * sigma * sigma),
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Checked evaluation; [`Kernel::eval`] assumes matching dimensions.
    pub fn try_eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_dim(x.len(), y)?;
        Ok(self.eval(x, y))
    }
}

#[inline]
fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

impl Kernel for RbfKernel {
    #[inline]
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        (squared_distance(x, y) * self.neg_inv_two_sigma_sq).exp()
    }
}

/// Wraps a kernel and counts evaluations. Clones share the counter.
#[derive(Debug, Clone)]
pub struct CountingKernel<K> {
    inner: K,
    count: Arc<AtomicU64>,
}

impl<K> CountingKernel<K> {
    pub fn new(inner: K) -> Self {
        Self {
            inner,
            count: Arc::new(AtomicU64::new(0)),
        }
    }

    pub fn count(&self) -> u64 {
        self.count.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.count.store(0, Ordering::Relaxed);
    }
}

impl<K: Kernel> Kernel for CountingKernel<K> {
    #[inline]
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.eval(x, y)
    }
}

/// Bandwidth as given by the user: a number or the median heuristic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Fixed(f64),
    Median,
}

impl Serialize for Bandwidth {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Bandwidth::Fixed(v) => s.serialize_f64(*v),
            Bandwidth::Median => s.serialize_str("median"),
        }
    }
}

impl<'de> Deserialize<'de> for Bandwidth {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Bandwidth::Fixed(v)),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl std::str::FromStr for Bandwidth {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("median") {
            return Ok(Bandwidth::Median);
        }
        s.parse::<f64>()
            .map(Bandwidth::Fixed)
            .map_err(|_| format!("bandwidth must be `median` or a number; got `{s}`"))
    }
}

/// Kernel definition. Only the Gaussian RBF kernel is provided.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub sigma: Bandwidth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    GaussianRbf,
}

impl KernelSpec {
    pub fn rbf(sigma: f64) -> Self {
        Self {
            kind: KernelKind::GaussianRbf,
            sigma: Bandwidth::Fixed(sigma),
        }
    }

    pub fn rbf_median() -> Self {
        Self {
            kind: KernelKind::GaussianRbf,
            sigma: Bandwidth::Median,
        }
    }

    /// Resolves `median` against `data` and returns a spec with a concrete sigma.
    pub fn resolve<R: AsRef<[f64]>>(&self, data: &[R]) -> Result<KernelSpec> {
        let sigma = match self.sigma {
            Bandwidth::Fixed(s) => s,
            Bandwidth::Median => median_heuristic(data)?,
        };
        // Validates the value.
        RbfKernel::new(sigma)?;
        Ok(KernelSpec::rbf(sigma))
    }

    /// The kernel for a resolved spec.
    pub fn kernel(&self) -> Result<RbfKernel> {
        match self.sigma {
            Bandwidth::Fixed(s) => RbfKernel::new(s),
            Bandwidth::Median => Err(Error::calibration(
                "median bandwidth must be resolved before kernel evaluation",
            )),
        }
    }
}

/// Median of the Euclidean distances over all distinct unordered pairs.
///
/// For an even number of pairs the two middle order statistics are averaged.
pub fn median_heuristic<R: AsRef<[f64]>>(data: &[R]) -> Result<f64> {
    let n = data.len();
    if n < 2 {
        return Err(Error::input(
            "median heuristic needs at least 2 observations",
        ));
    }
    let dim = data[0].as_ref().len();
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        let xi = data[i].as_ref();
        check_dim(dim, xi)?;
        for xj in &data[i + 1..] {
            dists.push(squared_distance(xi, xj.as_ref()).sqrt());
        }
    }
    let m = dists.len();
    let cmp = |a: &f64, b: &f64| a.total_cmp(b);
    let median = if m % 2 == 1 {
        *dists.select_nth_unstable_by(m / 2, cmp).1
    } else {
        let (lower, upper_mid, _) = dists.select_nth_unstable_by(m / 2, cmp);
        let upper = *upper_mid;
        let lower = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    };
    if median <= 0.0 {
        return Err(Error::calibration(
            "median pairwise distance is 0; bandwidth would be invalid",
        ));
    }
    Ok(median)
}

//! Statistic evaluation for bootstrap partitions.
//!
//! The MMD evaluators never touch the `M x M` reference block: its
//! off-diagonal sum is recovered from the total over the full reference set
//! minus the held-out and cross blocks.

use super::sampling::Partition;
use crate::data::ReferenceSet;
use crate::error::{Error, Result};
use crate::kernel_metrics::{
    mmd2_from_sums, offdiag_sum, partitioned_sums, DistanceEstimator, GramMatrix, Kernel,
};

/// Computes bootstrap statistics from index sets into a reference set.
pub trait BootstrapEvaluator: Sync {
    /// Statistics of every full sliding window of size `window` over
    /// `partition.holdout` (in draw order), each against `partition.reference`.
    fn stream_statistics(&self, partition: &Partition, window: usize) -> Result<Vec<f64>>;

    /// Statistic between two index samples; duplicates are allowed.
    fn statistic(&self, reference: &[usize], test: &[usize]) -> Result<f64>;
}

/// MMD statistics over the sliding windows of a held-out stream, given each
/// held-out point's kernel sum against the reference block and the held-out
/// kernel values `c(i, j)`.
fn mmd_window_statistics(
    ref_offdiag: f64,
    m: usize,
    col_cross: &[f64],
    c: impl Fn(usize, usize) -> f64,
    window: usize,
) -> Result<Vec<f64>> {
    let l = col_cross.len();
    if window < 2 || window > l || m < 2 {
        return Err(Error::input(format!(
            "need 2 <= window <= held-out length and M >= 2; got window {window}, held-out {l}, M {m}"
        )));
    }
    let mut test = 0.0;
    for i in 0..window {
        for j in 0..i {
            test += c(i, j);
        }
    }
    test *= 2.0;
    let mut out = Vec::with_capacity(l - window + 1);
    for start in 0..=l - window {
        if start > 0 {
            let (old, new) = (start - 1, start + window - 1);
            let mut delta = 0.0;
            for j in start..new {
                delta += c(new, j) - c(old, j);
            }
            test += 2.0 * delta;
        }
        let cross: f64 = col_cross[start..start + window].iter().sum();
        out.push(mmd2_from_sums(ref_offdiag, test, cross, m, window));
    }
    Ok(out)
}

fn check_window(partition: &Partition, window: usize) -> Result<()> {
    if window == 0 || window > partition.holdout.len() {
        return Err(Error::input(format!(
            "window {window} does not fit a held-out stream of length {}",
            partition.holdout.len()
        )));
    }
    Ok(())
}

/// MMD through a precomputed kernel matrix: per bootstrap only held-out
/// entries are read, `O(L^2)` lookups and no kernel evaluations.
pub struct MmdGramEvaluator {
    gram: GramMatrix,
}

impl MmdGramEvaluator {
    pub fn new<K: Kernel>(data: &ReferenceSet, kernel: &K) -> Self {
        Self {
            gram: GramMatrix::new(data, kernel),
        }
    }

    pub fn from_gram(gram: GramMatrix) -> Self {
        Self { gram }
    }

    pub fn gram(&self) -> &GramMatrix {
        &self.gram
    }
}

impl BootstrapEvaluator for MmdGramEvaluator {
    fn stream_statistics(&self, partition: &Partition, window: usize) -> Result<Vec<f64>> {
        check_window(partition, window)?;
        let g = &self.gram;
        let u = &partition.holdout;
        let l = u.len();
        let m = g.len() - l;
        let mut col_cross = Vec::with_capacity(l);
        let mut test_total = 0.0;
        for (a, &ua) in u.iter().enumerate() {
            let row = g.row(ua);
            let within: f64 = u
                .iter()
                .enumerate()
                .filter(|&(b, _)| b != a)
                .map(|(_, &ub)| row[ub])
                .sum();
            test_total += within;
            col_cross.push(g.row_sum(ua) - row[ua] - within);
        }
        let cross_total: f64 = col_cross.iter().sum();
        let ref_offdiag = g.total_offdiag() - test_total - 2.0 * cross_total;
        mmd_window_statistics(ref_offdiag, m, &col_cross, |i, j| g.get(u[i], u[j]), window)
    }

    fn statistic(&self, reference: &[usize], test: &[usize]) -> Result<f64> {
        let n = self.gram.len();
        if reference.len() < 2 || test.len() < 2 {
            return Err(Error::input("MMD needs at least 2 points per sample"));
        }
        if let Some(&i) = reference.iter().chain(test).find(|&&i| i >= n) {
            return Err(Error::input(format!("index {i} out of range")));
        }
        let g = &self.gram;
        let within = |s: &[usize]| {
            let mut t = 0.0;
            for (a, &i) in s.iter().enumerate() {
                for &j in &s[..a] {
                    t += g.get(i, j);
                }
            }
            2.0 * t
        };
        let cross: f64 = reference
            .iter()
            .map(|&i| test.iter().map(|&j| g.get(i, j)).sum::<f64>())
            .sum();
        Ok(mmd2_from_sums(
            within(reference),
            within(test),
            cross,
            reference.len(),
            test.len(),
        ))
    }
}

/// MMD evaluating the `B` and `C` blocks per bootstrap, for reference sets
/// too large to hold a dense kernel matrix. `N (2W - 1)` kernel evaluations
/// per bootstrap after a one-off `N (N - 1) / 2`.
pub struct MmdDirectEvaluator<'a, K> {
    data: &'a ReferenceSet,
    kernel: K,
    total: f64,
}

impl<'a, K: Kernel> MmdDirectEvaluator<'a, K> {
    pub fn new(data: &'a ReferenceSet, kernel: K) -> Self {
        let total = offdiag_sum(data, &kernel);
        Self {
            data,
            kernel,
            total,
        }
    }
}

impl<K: Kernel> BootstrapEvaluator for MmdDirectEvaluator<'_, K> {
    fn stream_statistics(&self, partition: &Partition, window: usize) -> Result<Vec<f64>> {
        check_window(partition, window)?;
        let view = partitioned_sums(
            self.data,
            &partition.reference,
            &partition.holdout,
            &self.kernel,
            self.total,
        )?;
        let col_cross = view.cross_column_sums();
        mmd_window_statistics(
            view.ref_offdiag_sum,
            view.m,
            &col_cross,
            |i, j| view.test(i, j),
            window,
        )
    }

    fn statistic(&self, reference: &[usize], test: &[usize]) -> Result<f64> {
        let x = self.data.select(reference)?;
        let y = self.data.select(test)?;
        crate::kernel_metrics::mmd2_batch(&x, &y, &self.kernel)
    }
}

/// Any [`DistanceEstimator`], evaluated on gathered rows.
pub struct GenericEvaluator<'a, E> {
    data: &'a ReferenceSet,
    estimator: E,
}

impl<'a, E: DistanceEstimator> GenericEvaluator<'a, E> {
    pub fn new(data: &'a ReferenceSet, estimator: E) -> Self {
        Self { data, estimator }
    }
}

impl<E: DistanceEstimator> BootstrapEvaluator for GenericEvaluator<'_, E> {
    fn stream_statistics(&self, partition: &Partition, window: usize) -> Result<Vec<f64>> {
        check_window(partition, window)?;
        let x = self.data.select(&partition.reference)?;
        let u = self.data.select(&partition.holdout)?;
        u.windows(window)
            .map(|y| self.estimator.distance(&x, y))
            .collect()
    }

    fn statistic(&self, reference: &[usize], test: &[usize]) -> Result<f64> {
        let x = self.data.select(reference)?;
        let y = self.data.select(test)?;
        self.estimator.distance(&x, &y)
    }
}

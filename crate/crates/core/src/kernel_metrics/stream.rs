//! Sliding-window statistics with `O(N)` updates.

use super::estimators::{mean, mmd2_from_sums, within_offdiag};
use super::kernel::Kernel;
use crate::data::{check_dim, check_finite};
use crate::error::{Error, Result};

/// Rolling aggregates are re-summed from per-slot values this often.
pub const RESUM_INTERVAL: u64 = 10_000;

/// A statistic of a fixed reference window against a sliding test window.
pub trait WindowStatistic: Send + Sync {
    fn window_size(&self) -> usize;

    /// Observations currently held (at most `window_size`).
    fn filled(&self) -> usize;

    /// Appends `z`, evicting the oldest observation once the window is full.
    /// Returns the statistic when the window is full after the push.
    fn push(&mut self, z: &[f64]) -> Result<Option<f64>>;

    /// Current statistic, if the window is full.
    fn statistic(&self) -> Option<f64>;

    /// Empties the test window; the reference side is kept.
    fn clear(&mut self);

    fn box_clone(&self) -> Box<dyn WindowStatistic>;
}

impl Clone for Box<dyn WindowStatistic> {
    fn clone(&self) -> Self {
        self.box_clone()
    }
}

/// Cached kernel sums for the squared-MMD statistic between a frozen
/// reference window of size `M` and a ring buffer of `W` test observations.
///
/// A push evaluates the kernel exactly `M + (filled - 1)` times, i.e.
/// `M + W - 1` in steady state: the new point against every reference point
/// and against every other point left in the test window.
#[derive(Debug, Clone)]
pub struct MmdCache<K> {
    kernel: K,
    dim: usize,
    reference: Vec<f64>,
    m: usize,
    w: usize,
    ref_offdiag_sum: f64,
    // ring buffer of test observations; `head` is the oldest slot once full
    slots: Vec<f64>,
    head: usize,
    filled: usize,
    /// Per slot: sum over the reference window of k(ref_i, y_slot).
    col_cross: Vec<f64>,
    /// Per slot: sum over other test slots of k(y_slot, y_j).
    row_test: Vec<f64>,
    /// Pairwise test-window kernel values, `W x W` by slot.
    pair: Vec<f64>,
    cross_sum: f64,
    test_offdiag_sum: f64,
    updates: u64,
}

impl<K: Kernel> MmdCache<K> {
    /// Empty test window. Computes the reference off-diagonal sum
    /// (`M(M-1)/2` evaluations).
    pub fn new<R: AsRef<[f64]>>(reference: &[R], window: usize, kernel: K) -> Result<Self> {
        let total = within_offdiag(reference, &kernel);
        Self::with_ref_offdiag(reference, window, kernel, total)
    }

    /// Empty test window with a precomputed `sum_{i != j} k(ref_i, ref_j)`.
    pub fn with_ref_offdiag<R: AsRef<[f64]>>(
        reference: &[R],
        window: usize,
        kernel: K,
        ref_offdiag_sum: f64,
    ) -> Result<Self> {
        let m = reference.len();
        if m < 2 || window < 2 {
            return Err(Error::input(format!(
                "MMD stream needs reference and test windows of size >= 2; got {m} and {window}"
            )));
        }
        let dim = reference[0].as_ref().len();
        let mut flat = Vec::with_capacity(m * dim);
        for r in reference {
            check_dim(dim, r.as_ref())?;
            check_finite(r.as_ref())?;
            flat.extend_from_slice(r.as_ref());
        }
        Ok(Self {
            kernel,
            dim,
            reference: flat,
            m,
            w: window,
            ref_offdiag_sum,
            slots: vec![0.0; window * dim],
            head: 0,
            filled: 0,
            col_cross: vec![0.0; window],
            row_test: vec![0.0; window],
            pair: vec![0.0; window * window],
            cross_sum: 0.0,
            test_offdiag_sum: 0.0,
            updates: 0,
        })
    }

    /// Populates the cache with a full initial test window.
    pub fn init<R: AsRef<[f64]>>(reference: &[R], initial_window: &[R], kernel: K) -> Result<Self> {
        let mut cache = Self::new(reference, initial_window.len(), kernel)?;
        for z in initial_window {
            cache.advance(z.as_ref())?;
        }
        Ok(cache)
    }

    /// Evicts the oldest observation, appends `incoming` and returns the new statistic.
    pub fn update(&mut self, incoming: &[f64]) -> Result<f64> {
        if self.filled < self.w {
            return Err(Error::State(format!(
                "update requires a full test window ({} of {} filled)",
                self.filled, self.w
            )));
        }
        self.advance(incoming).map(|s| s.expect("window is full"))
    }

    pub fn reference_size(&self) -> usize {
        self.m
    }

    pub fn ref_offdiag_sum(&self) -> f64 {
        self.ref_offdiag_sum
    }

    pub fn cross_sum(&self) -> f64 {
        self.cross_sum
    }

    pub fn test_offdiag_sum(&self) -> f64 {
        self.test_offdiag_sum
    }

    pub fn kernel(&self) -> &K {
        &self.kernel
    }

    /// Test-window contents, oldest first.
    pub fn window(&self) -> Vec<&[f64]> {
        let start = if self.filled == self.w { self.head } else { 0 };
        (0..self.filled)
            .map(|k| self.slot((start + k) % self.w))
            .collect()
    }

    pub fn reference_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.reference.chunks_exact(self.dim)
    }

    #[inline]
    fn slot(&self, s: usize) -> &[f64] {
        &self.slots[s * self.dim..(s + 1) * self.dim]
    }

    fn evict(&mut self, s: usize) {
        self.cross_sum -= self.col_cross[s];
        self.test_offdiag_sum -= 2.0 * self.row_test[s];
        for j in (0..self.w).filter(|&j| j != s) {
            self.row_test[j] -= self.pair[j * self.w + s];
        }
    }

    fn insert(&mut self, s: usize, z: &[f64], others: impl Iterator<Item = usize>) {
        self.slots[s * self.dim..(s + 1) * self.dim].copy_from_slice(z);
        let c: f64 = self
            .reference
            .chunks_exact(self.dim)
            .map(|r| self.kernel.eval(r, z))
            .sum();
        self.col_cross[s] = c;
        self.cross_sum += c;

        let mut row = 0.0;
        for j in others {
            let v = self.kernel.eval(z, &self.slots[j * self.dim..(j + 1) * self.dim]);
            self.pair[s * self.w + j] = v;
            self.pair[j * self.w + s] = v;
            self.row_test[j] += v;
            row += v;
        }
        self.row_test[s] = row;
        self.test_offdiag_sum += 2.0 * row;
    }

    /// Re-derives the rolling aggregates from the per-slot values.
    fn resum(&mut self) {
        let w = self.w;
        self.cross_sum = self.col_cross.iter().sum();
        for j in 0..w {
            self.row_test[j] = (0..w)
                .filter(|&l| l != j)
                .map(|l| self.pair[j * w + l])
                .sum();
        }
        self.test_offdiag_sum = self.row_test.iter().sum();
    }

    /// Recomputes every sum from the window contents; used as an oracle.
    pub fn recompute_from_scratch(&self) -> (f64, f64) {
        let window = self.window();
        let cross: f64 = self
            .reference_rows()
            .map(|r| window.iter().map(|y| self.kernel.eval(r, y)).sum::<f64>())
            .sum();
        (cross, within_offdiag(&window, &self.kernel))
    }
}

impl<K: Kernel> MmdCache<K> {
    fn advance(&mut self, z: &[f64]) -> Result<Option<f64>> {
        check_dim(self.dim, z)?;
        check_finite(z)?;
        let w = self.w;
        if self.filled < w {
            let s = self.filled;
            self.insert(s, z, 0..s);
            self.filled += 1;
        } else {
            let s = self.head;
            self.evict(s);
            self.insert(s, z, (0..w).filter(move |&j| j != s));
            self.head = (s + 1) % w;
            self.updates += 1;
            if self.updates.is_multiple_of(RESUM_INTERVAL) {
                self.resum();
            }
        }
        Ok(self.current())
    }

    fn current(&self) -> Option<f64> {
        (self.filled == self.w).then(|| {
            mmd2_from_sums(
                self.ref_offdiag_sum,
                self.test_offdiag_sum,
                self.cross_sum,
                self.m,
                self.w,
            )
        })
    }

    fn reset(&mut self) {
        self.head = 0;
        self.filled = 0;
        self.col_cross.iter_mut().for_each(|v| *v = 0.0);
        self.row_test.iter_mut().for_each(|v| *v = 0.0);
        self.pair.iter_mut().for_each(|v| *v = 0.0);
        self.cross_sum = 0.0;
        self.test_offdiag_sum = 0.0;
    }
}

impl<K: Kernel + Clone + 'static> WindowStatistic for MmdCache<K> {
    fn window_size(&self) -> usize {
        self.w
    }

    fn filled(&self) -> usize {
        self.filled
    }

    fn push(&mut self, z: &[f64]) -> Result<Option<f64>> {
        self.advance(z)
    }

    fn statistic(&self) -> Option<f64> {
        self.current()
    }

    fn clear(&mut self) {
        self.reset()
    }

    fn box_clone(&self) -> Box<dyn WindowStatistic> {
        Box::new(self.clone())
    }
}

/// Sliding difference-in-means statistic.
#[derive(Debug, Clone)]
pub struct MeanDiffStream {
    dim: usize,
    ref_mean: Vec<f64>,
    w: usize,
    slots: Vec<f64>,
    head: usize,
    filled: usize,
    sum: Vec<f64>,
    updates: u64,
}

impl MeanDiffStream {
    pub fn new<R: AsRef<[f64]>>(reference: &[R], window: usize) -> Result<Self> {
        if reference.is_empty() || window == 0 {
            return Err(Error::input("mean difference needs nonempty windows"));
        }
        let dim = reference[0].as_ref().len();
        for r in reference {
            check_dim(dim, r.as_ref())?;
        }
        Ok(Self {
            dim,
            ref_mean: mean(reference, dim),
            w: window,
            slots: vec![0.0; window * dim],
            head: 0,
            filled: 0,
            sum: vec![0.0; dim],
            updates: 0,
        })
    }
}

impl WindowStatistic for MeanDiffStream {
    fn window_size(&self) -> usize {
        self.w
    }

    fn filled(&self) -> usize {
        self.filled
    }

    fn push(&mut self, z: &[f64]) -> Result<Option<f64>> {
        check_dim(self.dim, z)?;
        check_finite(z)?;
        let d = self.dim;
        let s = if self.filled < self.w {
            self.filled += 1;
            self.filled - 1
        } else {
            let s = self.head;
            for (acc, old) in self.sum.iter_mut().zip(&self.slots[s * d..(s + 1) * d]) {
                *acc -= old;
            }
            self.head = (s + 1) % self.w;
            self.updates += 1;
            s
        };
        self.slots[s * d..(s + 1) * d].copy_from_slice(z);
        for (acc, v) in self.sum.iter_mut().zip(z) {
            *acc += v;
        }
        if self.updates > 0 && self.updates.is_multiple_of(RESUM_INTERVAL) {
            self.sum.iter_mut().for_each(|v| *v = 0.0);
            for row in self.slots.chunks_exact(d) {
                for (acc, v) in self.sum.iter_mut().zip(row) {
                    *acc += v;
                }
            }
        }
        Ok(self.statistic())
    }

    fn statistic(&self) -> Option<f64> {
        (self.filled == self.w).then(|| {
            let w = self.w as f64;
            self.ref_mean
                .iter()
                .zip(&self.sum)
                .map(|(r, s)| (r - s / w).powi(2))
                .sum::<f64>()
                .sqrt()
        })
    }

    fn clear(&mut self) {
        self.head = 0;
        self.filled = 0;
        self.sum.iter_mut().for_each(|v| *v = 0.0);
    }

    fn box_clone(&self) -> Box<dyn WindowStatistic> {
        Box::new(self.clone())
    }
}

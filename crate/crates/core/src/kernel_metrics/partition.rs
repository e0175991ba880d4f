use super::estimators::within_offdiag;
use super::kernel::Kernel;
use crate::data::ReferenceSet;
use crate::error::{Error, Result};

/// Block sums for a partition of the reference kernel matrix into a
/// reference block `A` (M x M), a cross block `B` (M x L) and a held-out
/// block `C` (L x L), with `L` the number of held-out points.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrixView {
    pub total_offdiag_sum: f64,
    pub ref_offdiag_sum: f64,
    pub cross_sum: f64,
    pub test_offdiag_sum: f64,
    /// `B[i][j] = k(ref_i, holdout_j)`, row-major `M x L`.
    pub cross_block: Vec<f64>,
    /// `C[i][j] = k(holdout_i, holdout_j)`, row-major `L x L`. The diagonal
    /// is not evaluated and holds 0.
    pub test_block: Vec<f64>,
    pub m: usize,
    pub l: usize,
}

impl KernelMatrixView {
    #[inline]
    pub fn cross(&self, i: usize, j: usize) -> f64 {
        self.cross_block[i * self.l + j]
    }

    #[inline]
    pub fn test(&self, i: usize, j: usize) -> f64 {
        self.test_block[i * self.l + j]
    }

    /// Per held-out point, the sum of its kernel values against the reference block.
    pub fn cross_column_sums(&self) -> Vec<f64> {
        let mut cols = vec![0.0; self.l];
        for row in self.cross_block.chunks_exact(self.l.max(1)) {
            for (c, v) in cols.iter_mut().zip(row) {
                *c += v;
            }
        }
        cols
    }
}

/// `sum_{i != j} k(z_i, z_j)` over a full reference set; `N(N-1)/2` evaluations.
pub fn offdiag_sum<K: Kernel>(data: &ReferenceSet, kernel: &K) -> f64 {
    let rows: Vec<&[f64]> = data.rows().collect();
    within_offdiag(&rows, kernel)
}

/// Materialises the `B` and `C` blocks for the split `(ref_indices,
/// holdout_indices)` and recovers the reference block's off-diagonal sum
/// from `precomputed_total` without evaluating the `M x M` block.
///
/// The two index sets must partition `0..N`. Kernel evaluations:
/// `M * L + L * (L - 1) / 2`.
pub fn partitioned_sums<K: Kernel>(
    data: &ReferenceSet,
    ref_indices: &[usize],
    holdout_indices: &[usize],
    kernel: &K,
    precomputed_total: f64,
) -> Result<KernelMatrixView> {
    let n = data.len();
    let mut seen = vec![false; n];
    for &i in ref_indices.iter().chain(holdout_indices) {
        if i >= n {
            return Err(Error::input(format!(
                "index {i} out of range for reference set of size {n}"
            )));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::input(format!("index {i} appears twice in partition")));
        }
    }
    if ref_indices.len() + holdout_indices.len() != n {
        return Err(Error::input(
            "reference and holdout indices must cover the whole reference set",
        ));
    }

    let (m, l) = (ref_indices.len(), holdout_indices.len());
    let holdout = data.select(holdout_indices)?;
    let mut cross_block = Vec::with_capacity(m * l);
    for &i in ref_indices {
        let zi = data.row(i);
        cross_block.extend(holdout.iter().map(|u| kernel.eval(zi, u)));
    }
    let mut test_block = vec![0.0; l * l];
    for i in 0..l {
        for j in 0..i {
            let v = kernel.eval(holdout[i], holdout[j]);
            test_block[i * l + j] = v;
            test_block[j * l + i] = v;
        }
    }

    let cross_sum: f64 = cross_block
        .chunks_exact(l.max(1))
        .map(|r| r.iter().sum::<f64>())
        .sum();
    let test_offdiag_sum = offdiag_of_block(&test_block, l);
    Ok(KernelMatrixView {
        total_offdiag_sum: precomputed_total,
        ref_offdiag_sum: precomputed_total - test_offdiag_sum - 2.0 * cross_sum,
        cross_sum,
        test_offdiag_sum,
        cross_block,
        test_block,
        m,
        l,
    })
}

fn offdiag_of_block(block: &[f64], l: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..l {
        let mut row = 0.0;
        for j in 0..i {
            row += block[i * l + j];
        }
        total += row;
    }
    2.0 * total
}

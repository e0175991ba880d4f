use super::kernel::Kernel;
use crate::data::ReferenceSet;

/// Dense kernel matrix over a reference set, with its row sums and the
/// off-diagonal total. Building it costs `N(N+1)/2` kernel evaluations;
/// every later block sum is a table lookup.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    n: usize,
    values: Vec<f64>,
    row_sums: Vec<f64>,
    total_offdiag: f64,
}

impl GramMatrix {
    pub fn new<K: Kernel>(data: &ReferenceSet, kernel: &K) -> Self {
        let n = data.len();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            let xi = data.row(i);
            for j in 0..=i {
                let v = kernel.eval(xi, data.row(j));
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        let row_sums: Vec<f64> = values.chunks_exact(n.max(1)).map(|r| r.iter().sum()).collect();
        let total_offdiag = (0..n).map(|i| row_sums[i] - values[i * n + i]).sum();
        Self {
            n,
            values,
            row_sums,
            total_offdiag,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    /// `sum_j K[i, j]` including the diagonal.
    #[inline]
    pub fn row_sum(&self, i: usize) -> f64 {
        self.row_sums[i]
    }

    /// `sum_{i != j} K[i, j]`.
    #[inline]
    pub fn total_offdiag(&self) -> f64 {
        self.total_offdiag
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel_metrics::{CountingKernel, RbfKernel};

    #[test]
    fn symmetric_with_consistent_sums() {
        let data = ReferenceSet::from_rows(&[[0.0, 1.0], [1.0, 0.5], [-2.0, 0.0], [0.3, 0.3]])
            .unwrap();
        let k = CountingKernel::new(RbfKernel::new(1.3).unwrap());
        let g = GramMatrix::new(&data, &k);
        assert_eq!(k.count(), 10);
        let mut direct = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(g.get(i, j), g.get(j, i));
                if i != j {
                    direct += k.eval(data.row(i), data.row(j));
                }
            }
        }
        assert!((g.total_offdiag() - direct).abs() < 1e-12);
    }
}

//! Row-major storage for reference sets and windows of observations.

use crate::error::{Error, Result};

/// A fixed sample of `N` observations of dimension `d` drawn from the
/// pre-change distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSet {
    values: Vec<f64>,
    dim: usize,
}

impl ReferenceSet {
    /// Builds a reference set from row-major values.
    pub fn from_flat(values: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::input("observation dimension must be at least 1"));
        }
        if !values.len().is_multiple_of(dim) {
            return Err(Error::input(format!(
                "{} values do not divide into rows of dimension {dim}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!(
                "non-finite value in row {}",
                pos / dim
            )));
        }
        Ok(Self { values, dim })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or_else(|| Error::input("reference set is empty"))?;
        let mut values = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            let row = row.as_ref();
            check_dim(dim, row)?;
            values.extend_from_slice(row);
        }
        Self::from_flat(values, dim)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.dim)
    }

    /// Borrowed rows at `indices`, in the given order (duplicates allowed).
    pub fn select(&self, indices: &[usize]) -> Result<Vec<&[f64]>> {
        indices
            .iter()
            .map(|&i| {
                if i < self.len() {
                    Ok(self.row(i))
                } else {
                    Err(Error::input(format!(
                        "index {i} out of range for reference set of size {}",
                        self.len()
                    )))
                }
            })
            .collect()
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }
}

pub(crate) fn check_dim(expected: usize, row: &[f64]) -> Result<()> {
    if row.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: row.len(),
        });
    }
    Ok(())
}

pub(crate) fn check_finite(row: &[f64]) -> Result<()> {
    if row.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::input("observation contains a non-finite value"))
    }
}

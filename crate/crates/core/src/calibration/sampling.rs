use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};

/// A split of `0..N` into a reference window and a held-out mini-stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    /// Reference indices in ascending order.
    pub reference: Vec<usize>,
    /// Held-out indices in draw order.
    pub holdout: Vec<usize>,
}

/// Uniformly random split of `0..n` with `holdout_size` held out.
pub fn split_without_replacement<R: Rng + ?Sized>(
    n: usize,
    holdout_size: usize,
    rng: &mut R,
) -> Result<Partition> {
    if holdout_size < 2 || holdout_size >= n {
        return Err(Error::input(format!(
            "holdout size must satisfy 2 <= holdout < N = {n}; got {holdout_size}"
        )));
    }
    let holdout = index::sample(rng, n, holdout_size).into_vec();
    let mut held = vec![false; n];
    for &i in &holdout {
        held[i] = true;
    }
    let reference = (0..n).filter(|&i| !held[i]).collect();
    Ok(Partition { reference, holdout })
}

/// `k` indices drawn with replacement from `0..n`.
pub fn sample_with_replacement<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    (0..k).map(|_| rng.random_range(0..n)).collect()
}

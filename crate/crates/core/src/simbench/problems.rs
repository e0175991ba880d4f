//! Synthetic pre/post-change distributions.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::ReferenceSet;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Problem {
    /// 20-d standard Gaussian; after the change every mean shifts by 0.3.
    D1,
    /// 20-d standard Gaussian; after the change the last 10 variances double.
    D2,
    /// Uniform on `[-1, 1]^2`; after the change uniform on `|x| + |y| <= 2`.
    D3,
    /// Uniform on `[-1, 1]^2`; after the change the central `[-1/2, 1/2]^2`
    /// is removed.
    D4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pre,
    Post,
}

impl Problem {
    pub const ALL: [Problem; 4] = [Problem::D1, Problem::D2, Problem::D3, Problem::D4];

    pub fn dim(&self) -> usize {
        match self {
            Problem::D1 | Problem::D2 => 20,
            Problem::D3 | Problem::D4 => 2,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Problem::D1 => "d1",
            Problem::D2 => "d2",
            Problem::D3 => "d3",
            Problem::D4 => "d4",
        }
    }

    /// Writes one observation into `out` (length `self.dim()`).
    pub fn sample_into<R: Rng + ?Sized>(&self, phase: Phase, rng: &mut R, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim());
        match (self, phase) {
            (Problem::D1, Phase::Pre) | (Problem::D2, Phase::Pre) => {
                out.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            }
            (Problem::D1, Phase::Post) => {
                out.iter_mut()
                    .for_each(|v| *v = 0.3 + rng.sample::<f64, _>(StandardNormal));
            }
            (Problem::D2, Phase::Post) => {
                for (i, v) in out.iter_mut().enumerate() {
                    let z: f64 = rng.sample(StandardNormal);
                    *v = if i < 10 { z } else { z * std::f64::consts::SQRT_2 };
                }
            }
            (Problem::D3, Phase::Pre) | (Problem::D4, Phase::Pre) => {
                out[0] = rng.random_range(-1.0..1.0);
                out[1] = rng.random_range(-1.0..1.0);
            }
            (Problem::D3, Phase::Post) => {
                let u: f64 = rng.random_range(-1.0..1.0);
                let v: f64 = rng.random_range(-1.0..1.0);
                out[0] = u + v;
                out[1] = u - v;
            }
            (Problem::D4, Phase::Post) => loop {
                let x: f64 = rng.random_range(-1.0..1.0);
                let y: f64 = rng.random_range(-1.0..1.0);
                if x.abs() > 0.5 || y.abs() > 0.5 {
                    out[0] = x;
                    out[1] = y;
                    break;
                }
            },
        }
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, phase: Phase, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.sample_into(phase, rng, &mut out);
        out
    }
}

impl std::str::FromStr for Problem {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "d1" => Ok(Problem::D1),
            "d2" => Ok(Problem::D2),
            "d3" => Ok(Problem::D3),
            "d4" => Ok(Problem::D4),
            other => Err(format!("unknown problem `{other}` (expected d1, d2, d3 or d4)")),
        }
    }
}

/// `n` i.i.d. observations from `problem` in `phase`.
pub fn sample_problem<R: Rng + ?Sized>(
    problem: Problem,
    phase: Phase,
    n: usize,
    rng: &mut R,
) -> Result<ReferenceSet> {
    let d = problem.dim();
    let mut values = vec![0.0; n * d];
    for row in values.chunks_exact_mut(d) {
        problem.sample_into(phase, rng, row);
    }
    ReferenceSet::from_flat(values, d)
}

/// A stream that switches from `pre` to `post` at 1-based time `tau`.
pub struct StreamModel<R> {
    pub problem: Problem,
    pub tau: Option<u64>,
    rng: R,
    t: u64,
}

impl<R: Rng> StreamModel<R> {
    pub fn new(problem: Problem, tau: Option<u64>, rng: R) -> Self {
        Self {
            problem,
            tau,
            rng,
            t: 0,
        }
    }
}

impl<R: Rng> Iterator for StreamModel<R> {
    type Item = Vec<f64>;

    fn next(&mut self) -> Option<Vec<f64>> {
        self.t += 1;
        let phase = match self.tau {
            Some(tau) if self.t >= tau => Phase::Post,
            _ => Phase::Pre,
        };
        Some(self.problem.sample_one(phase, &mut self.rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn diamond_and_hollow_square_support() {
        let mut r = rng::stream(1, 0x77, 0);
        let d3 = sample_problem(Problem::D3, Phase::Post, 100_000, &mut r).unwrap();
        assert!(d3.rows().all(|z| z[0].abs() + z[1].abs() <= 2.0));
        let d4 = sample_problem(Problem::D4, Phase::Post, 100_000, &mut r).unwrap();
        assert!(d4.rows().all(|z| {
            z[0].abs().max(z[1].abs()) <= 1.0 && !(z[0].abs() <= 0.5 && z[1].abs() <= 0.5)
        }));
        let pre = sample_problem(Problem::D4, Phase::Pre, 100_000, &mut r).unwrap();
        assert!(pre.rows().all(|z| z[0].abs() <= 1.0 && z[1].abs() <= 1.0));
    }

    #[test]
    fn diamond_fills_its_corners() {
        let mut r = rng::stream(2, 0x77, 0);
        let d3 = sample_problem(Problem::D3, Phase::Post, 40_000, &mut r).unwrap();
        // each of the four triangles outside the unit square holds 1/8 of the mass
        let outside = d3.rows().filter(|z| z[0].abs() > 1.0).count() as f64 / 40_000.0;
        assert!((outside - 0.25).abs() < 0.01, "{outside}");
    }

    #[test]
    fn d1_post_mean() {
        let n = 1_000_000 / 20;
        let mut r = rng::stream(3, 0x77, 0);
        // 10^6 draws per coordinate, split over 20 passes to bound memory
        let mut sum = [0.0; 20];
        for _ in 0..20 {
            let s = sample_problem(Problem::D1, Phase::Post, n, &mut r).unwrap();
            for z in s.rows() {
                for (a, v) in sum.iter_mut().zip(z) {
                    *a += v;
                }
            }
        }
        for a in sum {
            let m = a / 1e6;
            assert!((m - 0.3).abs() < 0.003, "{m}");
        }
    }

    #[test]
    fn d2_post_variances() {
        let total = 1_000_000usize;
        let mut r = rng::stream(4, 0x77, 0);
        let mut s1 = [0.0f64; 20];
        let mut s2 = [0.0f64; 20];
        let mut z = vec![0.0; 20];
        for _ in 0..total {
            Problem::D2.sample_into(Phase::Post, &mut r, &mut z);
            for i in 0..20 {
                s1[i] += z[i];
                s2[i] += z[i] * z[i];
            }
        }
        for i in 0..20 {
            let n = total as f64;
            let var = (s2[i] - s1[i] * s1[i] / n) / (n - 1.0);
            let (target, tol) = if i < 10 { (1.0, 0.01) } else { (2.0, 0.02) };
            assert!((var - target).abs() < tol, "coordinate {i}: {var}");
        }
    }

    #[test]
    fn stream_switches_at_tau() {
        let s = StreamModel::new(Problem::D4, Some(4), rng::stream(5, 0x77, 0));
        let rows: Vec<Vec<f64>> = s.take(400).collect();
        assert!(rows[3..]
            .iter()
            .all(|z| !(z[0].abs() <= 0.5 && z[1].abs() <= 0.5)));
        assert_eq!("D3".parse::<Problem>().unwrap(), Problem::D3);
        assert!("d5".parse::<Problem>().is_err());
    }
}

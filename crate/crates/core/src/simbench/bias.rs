//! Window-sharing bias: how well with- and without-replacement bootstraps
//! from a Gaussian reference set reproduce the law of the statistic they
//! stand in for.
//!
//! With replacement, both windows are resampled from the reference set and
//! the target has a with-replacement reference window and a fresh test
//! window. Without replacement, the windows are a disjoint split and the
//! target has a random `N - W` subset as reference and a fresh test window.

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::ks_two_sample;
use crate::calibration::{
    sample_with_replacement, split_without_replacement, BootstrapEvaluator, MmdGramEvaluator,
};
use crate::data::ReferenceSet;
use crate::error::{Error, Result};
use crate::kernel_metrics::{
    mmd2_from_sums, DistanceEstimator, EstimatorKind, GramMatrix, Kernel, KernelSpec,
    MeanDifference, Mmd,
};
use crate::rng::{self, domain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasStudyConfig {
    pub dim: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "W")]
    pub window: usize,
    /// Bootstrap samples per scheme; the same number of target draws is used.
    #[serde(rename = "B")]
    pub bootstraps: usize,
    pub estimator: EstimatorKind,
    pub kernel: KernelSpec,
    pub seed: u64,
}

impl BiasStudyConfig {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self {
            dim,
            n: 1000,
            window: 25,
            bootstraps: 25_000,
            estimator: EstimatorKind::Mmd,
            kernel: KernelSpec::rbf_median(),
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::input("dimension must be at least 1"));
        }
        if self.window < 2 || self.n < self.window + 2 {
            return Err(Error::input(format!(
                "need W >= 2 and N >= W + 2; got N = {}, W = {}",
                self.n, self.window
            )));
        }
        if self.bootstraps == 0 {
            return Err(Error::input("number of bootstraps must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasStudyResult {
    pub dim: usize,
    pub ks_with_replacement: f64,
    pub ks_without_replacement: f64,
}

/// The four samples compared by the study.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasSamples {
    pub bootstrap_with: Vec<f64>,
    pub bootstrap_without: Vec<f64>,
    pub target_with: Vec<f64>,
    pub target_without: Vec<f64>,
}

struct TargetDraw {
    /// `W` held-out indices; the target reference window is the rest.
    holdout: Vec<usize>,
    /// `N - W` indices drawn with replacement.
    resampled: Vec<usize>,
    /// `W` fresh observations, row-major.
    fresh: Vec<f64>,
}

fn target_draw(cfg: &BiasStudyConfig, g: u64) -> TargetDraw {
    let mut r = rng::stream(cfg.seed, domain::GROUND_TRUTH, g);
    let holdout = index::sample(&mut r, cfg.n, cfg.window).into_vec();
    let resampled = sample_with_replacement(cfg.n, cfg.n - cfg.window, &mut r);
    let fresh = (0..cfg.window * cfg.dim)
        .map(|_| r.sample(StandardNormal))
        .collect();
    TargetDraw {
        holdout,
        resampled,
        fresh,
    }
}

fn with_replacement_draw(cfg: &BiasStudyConfig, b: u64) -> (Vec<usize>, Vec<usize>) {
    let mut r = rng::stream(cfg.seed, domain::WITH_REPLACEMENT, b);
    let reference = sample_with_replacement(cfg.n, cfg.n - cfg.window, &mut r);
    let test = sample_with_replacement(cfg.n, cfg.window, &mut r);
    (reference, test)
}

fn without_replacement_draw(cfg: &BiasStudyConfig, b: u64) -> Result<crate::calibration::Partition> {
    let mut r: ChaCha8Rng = rng::stream(cfg.seed, domain::BOOTSTRAP, b);
    split_without_replacement(cfg.n, cfg.window, &mut r)
}

fn complement(n: usize, holdout: &[usize]) -> Vec<usize> {
    let mut held = vec![false; n];
    holdout.iter().for_each(|&i| held[i] = true);
    (0..n).filter(|&i| !held[i]).collect()
}

/// Distinct indices with their multiplicities, ascending.
fn multiplicities(n: usize, draws: &[usize]) -> Vec<(usize, f64)> {
    let mut counts = vec![0u32; n];
    draws.iter().for_each(|&i| counts[i] += 1);
    counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, &c)| (i, c as f64))
        .collect()
}

/// Sum over ordered pairs of distinct positions of a multiset sample.
fn multiset_offdiag(g: &GramMatrix, m: &[(usize, f64)]) -> f64 {
    let mut lower = 0.0;
    let mut diag = 0.0;
    for (a, &(i, ci)) in m.iter().enumerate() {
        let row = g.row(i);
        let inner: f64 = m[..a].iter().map(|&(j, cj)| cj * row[j]).sum();
        lower += ci * inner;
        diag += ci * (ci - 1.0) * row[i];
    }
    2.0 * lower + diag
}

fn positions_offdiag(g: &GramMatrix, s: &[usize]) -> f64 {
    let mut t = 0.0;
    for (a, &i) in s.iter().enumerate() {
        for &j in &s[..a] {
            t += g.get(i, j);
        }
    }
    2.0 * t
}

fn rows_offdiag<K: Kernel>(rows: &[f64], dim: usize, kernel: &K) -> f64 {
    let rs: Vec<&[f64]> = rows.chunks_exact(dim).collect();
    let mut t = 0.0;
    for i in 0..rs.len() {
        for j in 0..i {
            t += kernel.eval(rs[i], rs[j]);
        }
    }
    2.0 * t
}

fn gaussian_reference(cfg: &BiasStudyConfig) -> Result<ReferenceSet> {
    let mut r = rng::stream(cfg.seed, domain::REFERENCE, cfg.dim as u64);
    let v = (0..cfg.n * cfg.dim).map(|_| r.sample(StandardNormal)).collect();
    ReferenceSet::from_flat(v, cfg.dim)
}

/// Bootstrap and target samples via a dense kernel matrix.
fn mmd_samples(cfg: &BiasStudyConfig, data: &ReferenceSet) -> Result<BiasSamples> {
    let rows: Vec<&[f64]> = data.rows().collect();
    let kernel = cfg.kernel.resolve(&rows)?.kernel()?;
    let eval = MmdGramEvaluator::new(data, &kernel);
    let g = eval.gram();
    let (n, w, d) = (cfg.n, cfg.window, cfg.dim);
    let m = n - w;
    let count = cfg.bootstraps as u64;

    let bootstrap_without = (1..=count)
        .into_par_iter()
        .map(|b| Ok(eval.stream_statistics(&without_replacement_draw(cfg, b)?, w)?[0]))
        .collect::<Result<Vec<f64>>>()?;

    let bootstrap_with = (1..=count)
        .into_par_iter()
        .map(|b| {
            let (reference, test) = with_replacement_draw(cfg, b);
            let mult = multiplicities(n, &reference);
            let cross: f64 = mult
                .iter()
                .map(|&(i, c)| {
                    let row = g.row(i);
                    c * test.iter().map(|&j| row[j]).sum::<f64>()
                })
                .sum();
            mmd2_from_sums(
                multiset_offdiag(g, &mult),
                positions_offdiag(g, &test),
                cross,
                m,
                w,
            )
        })
        .collect::<Vec<f64>>();

    let targets = (1..=count)
        .into_par_iter()
        .map(|t| {
            let draw = target_draw(cfg, t);
            let fresh: Vec<&[f64]> = draw.fresh.chunks_exact(d).collect();
            let to_fresh: Vec<f64> = data
                .rows()
                .map(|z| fresh.iter().map(|y| kernel.eval(z, y)).sum())
                .collect();
            let test_offdiag = rows_offdiag(&draw.fresh, d, &kernel);

            let u = &draw.holdout;
            let within_u = positions_offdiag(g, u);
            let cross_u: f64 = u.iter().map(|&i| g.row_sum(i) - g.get(i, i)).sum::<f64>() - within_u;
            let ref_without = g.total_offdiag() - within_u - 2.0 * cross_u;
            let cross_without = to_fresh.iter().sum::<f64>() - u.iter().map(|&i| to_fresh[i]).sum::<f64>();
            let without = mmd2_from_sums(ref_without, test_offdiag, cross_without, m, w);

            let mult = multiplicities(n, &draw.resampled);
            let cross_with: f64 = mult.iter().map(|&(i, c)| c * to_fresh[i]).sum();
            let with = mmd2_from_sums(multiset_offdiag(g, &mult), test_offdiag, cross_with, m, w);
            (with, without)
        })
        .collect::<Vec<(f64, f64)>>();
    let (target_with, target_without) = targets.into_iter().unzip();

    Ok(BiasSamples {
        bootstrap_with,
        bootstrap_without,
        target_with,
        target_without,
    })
}

/// Bootstrap and target samples by gathering rows and calling `estimator`
/// directly. Uses the same random draws as the kernel-matrix path.
pub fn estimator_samples<E: DistanceEstimator>(
    cfg: &BiasStudyConfig,
    data: &ReferenceSet,
    estimator: &E,
) -> Result<BiasSamples> {
    cfg.validate()?;
    let (n, d) = (cfg.n, cfg.dim);
    let count = cfg.bootstraps as u64;
    let bootstrap_without = (1..=count)
        .into_par_iter()
        .map(|b| {
            let p = without_replacement_draw(cfg, b)?;
            estimator.distance(&data.select(&p.reference)?, &data.select(&p.holdout)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    let bootstrap_with = (1..=count)
        .into_par_iter()
        .map(|b| {
            let (r, t) = with_replacement_draw(cfg, b);
            estimator.distance(&data.select(&r)?, &data.select(&t)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    let targets = (1..=count)
        .into_par_iter()
        .map(|t| {
            let draw = target_draw(cfg, t);
            let fresh: Vec<&[f64]> = draw.fresh.chunks_exact(d).collect();
            let without = estimator.distance(&data.select(&complement(n, &draw.holdout))?, &fresh)?;
            let with = estimator.distance(&data.select(&draw.resampled)?, &fresh)?;
            Ok((with, without))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let (target_with, target_without) = targets.into_iter().unzip();
    Ok(BiasSamples {
        bootstrap_with,
        bootstrap_without,
        target_with,
        target_without,
    })
}

/// Draws the Gaussian reference set for `cfg` and builds all four samples.
pub fn bias_samples(cfg: &BiasStudyConfig) -> Result<BiasSamples> {
    cfg.validate()?;
    let data = gaussian_reference(cfg)?;
    match cfg.estimator {
        EstimatorKind::Mmd => mmd_samples(cfg, &data),
        EstimatorKind::MeanDiff => estimator_samples(cfg, &data, &MeanDifference),
    }
}

/// KS distances between each bootstrap sample and its target sample.
pub fn window_sharing_bias_study(cfg: &BiasStudyConfig) -> Result<BiasStudyResult> {
    let s = bias_samples(cfg)?;
    Ok(BiasStudyResult {
        dim: cfg.dim,
        ks_with_replacement: ks_two_sample(&s.bootstrap_with, &s.target_with),
        ks_without_replacement: ks_two_sample(&s.bootstrap_without, &s.target_without),
    })
}

/// The kernel-matrix path checked against [`estimator_samples`] with the
/// same draws; exposed for tests and benchmarks.
pub fn mmd_samples_reference_path(cfg: &BiasStudyConfig) -> Result<(BiasSamples, BiasSamples)> {
    cfg.validate()?;
    let data = gaussian_reference(cfg)?;
    let rows: Vec<&[f64]> = data.rows().collect();
    let kernel = cfg.kernel.resolve(&rows)?.kernel()?;
    Ok((
        mmd_samples(cfg, &data)?,
        estimator_samples(cfg, &data, &Mmd(kernel))?,
    ))
}

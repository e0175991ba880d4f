//! Simulation-based threshold configuration.
//!
//! Three procedures are provided:
//!
//! * [`configure_calm`]: `W` conditional thresholds from bootstrap
//!   mini-streams held out of a without-replacement reference window, so the
//!   per-step false-alarm probability stays at `alpha = 1 / ERT`.
//! * [`configure_time_invariant`]: a single threshold for the first test.
//! * [`configure_lsdd_inc_baseline`]: the with-replacement `(W, W)`
//!   bootstrap with a mean shift, kept as a comparison baseline.
//!
//! Bootstrap `b` draws from random stream `(seed, b)` for `b = 1..=B`; the
//! operational reference window is drawn from stream `(seed, 0)`.

mod evaluator;
mod quantile;
mod sampling;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use evaluator::{BootstrapEvaluator, GenericEvaluator, MmdDirectEvaluator, MmdGramEvaluator};
pub use quantile::{conditional_thresholds, empirical_upper_quantile, ConditionalThresholds};
pub use sampling::{sample_with_replacement, split_without_replacement, Partition};

use crate::data::ReferenceSet;
use crate::error::{Error, Result};
use crate::kernel_metrics::{Bandwidth, EstimatorKind, KernelSpec, MeanDifference};
use crate::rng::{self, domain};

pub const SCHEMA_VERSION: u32 = 1;

pub const DEFAULT_BOOTSTRAPS: usize = 10_000;

/// Largest reference set for which a dense kernel matrix is built.
pub const GRAM_MAX_N: usize = 4096;

/// Threshold configuration procedure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "calm")]
    Calm,
    #[serde(rename = "time-invariant")]
    TimeInvariant,
    #[serde(rename = "lsdd-inc")]
    LsddInc,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Calm => "calm",
            Algorithm::TimeInvariant => "time-invariant",
            Algorithm::LsddInc => "lsdd-inc",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "calm" => Ok(Algorithm::Calm),
            "time-invariant" => Ok(Algorithm::TimeInvariant),
            "lsdd-inc" => Ok(Algorithm::LsddInc),
            other => Err(format!(
                "unknown algorithm `{other}` (expected calm, time-invariant or lsdd-inc)"
            )),
        }
    }
}

fn default_min_survivors() -> usize {
    50
}

fn default_expectation_samples() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Test window size `W`.
    pub window: usize,
    /// Desired expected runtime `mu`; `alpha = 1 / mu`.
    pub ert: f64,
    /// Number of bootstrap samples `B`.
    pub bootstraps: usize,
    pub seed: u64,
    pub estimator: EstimatorKind,
    pub kernel: KernelSpec,
    /// Abort when fewer trajectories than this enter a conditional step.
    #[serde(default = "default_min_survivors")]
    pub min_survivors: usize,
    /// Monte Carlo draws for each expectation in the baseline's shift.
    #[serde(default = "default_expectation_samples")]
    pub expectation_samples: usize,
}

impl CalibrationConfig {
    pub fn new(window: usize, ert: f64, bootstraps: usize, seed: u64) -> Self {
        Self {
            window,
            ert,
            bootstraps,
            seed,
            estimator: EstimatorKind::Mmd,
            kernel: KernelSpec::rbf_median(),
            min_survivors: default_min_survivors(),
            expectation_samples: default_expectation_samples(),
        }
    }

    pub fn alpha(&self) -> f64 {
        1.0 / self.ert
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::input(format!(
                "window size must be at least 2; got {}",
                self.window
            )));
        }
        if !(self.ert.is_finite() && self.ert > 1.0) {
            return Err(Error::input(format!(
                "expected runtime must be finite and > 1 so that 0 < alpha < 1; got {}",
                self.ert
            )));
        }
        if self.bootstraps == 0 {
            return Err(Error::input("number of bootstraps must be positive"));
        }
        if let Bandwidth::Fixed(s) = self.kernel.sigma {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::input(format!("bandwidth must be > 0; got {s}")));
            }
        }
        Ok(())
    }

    fn warn_on_weak_settings(&self) {
        if self.ert <= self.window as f64 {
            log::warn!(
                "expected runtime {} does not exceed the window size {}",
                self.ert,
                self.window
            );
        }
        let expected_final = self.bootstraps as f64 * (1.0 - self.alpha()).powi(self.window as i32);
        if expected_final < 100.0 {
            log::warn!(
                "about {expected_final:.0} bootstrap trajectories will remain for the final \
                 threshold; consider more bootstraps"
            );
        }
    }
}

/// Calibrated thresholds plus everything needed to operate them.
///
/// Indices are 0-based positions in the reference set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSchedule {
    pub schema_version: u32,
    pub algorithm: Algorithm,
    pub estimator: EstimatorKind,
    /// Resolved kernel; `None` for kernel-free estimators.
    pub kernel: Option<KernelSpec>,
    #[serde(rename = "N")]
    pub n: usize,
    pub d: usize,
    #[serde(rename = "W")]
    pub window: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub alpha: f64,
    pub ert: f64,
    #[serde(rename = "B")]
    pub bootstraps: usize,
    pub seed: u64,
    pub ref_window_indices: Vec<usize>,
    pub holdout_indices: Vec<usize>,
    pub thresholds: Vec<f64>,
    pub survivor_counts: Vec<usize>,
}

impl ThresholdSchedule {
    /// Threshold at schedule position `pos`, clamped to the last entry.
    pub fn threshold_at(&self, pos: usize) -> f64 {
        self.thresholds[pos.min(self.thresholds.len() - 1)]
    }

    /// The calibration settings this schedule was built with.
    pub fn config(&self) -> CalibrationConfig {
        CalibrationConfig {
            window: self.window,
            ert: self.ert,
            bootstraps: self.bootstraps,
            seed: self.seed,
            estimator: self.estimator,
            kernel: self.kernel.unwrap_or_else(KernelSpec::rbf_median),
            min_survivors: default_min_survivors(),
            expectation_samples: default_expectation_samples(),
        }
    }

    /// Checks that this schedule can be operated against `reference`.
    pub fn check_against(&self, reference: &ReferenceSet) -> Result<()> {
        if reference.len() != self.n {
            return Err(Error::input(format!(
                "schedule was built for N = {} but the reference set has {} rows",
                self.n,
                reference.len()
            )));
        }
        if reference.dim() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: reference.dim(),
            });
        }
        self.validate()
    }

    /// Internal consistency of a (possibly deserialized) schedule.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::input(format!(
                "unsupported schedule schema version {}",
                self.schema_version
            )));
        }
        if self.thresholds.is_empty() || self.thresholds.iter().any(|h| !h.is_finite()) {
            return Err(Error::input("schedule thresholds must be finite and nonempty"));
        }
        if self.ref_window_indices.len() != self.m {
            return Err(Error::input("reference window size does not match M"));
        }
        let mut seen = vec![false; self.n];
        for &i in self.ref_window_indices.iter().chain(&self.holdout_indices) {
            if i >= self.n {
                return Err(Error::input(format!("schedule index {i} out of range")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::input(format!("schedule index {i} is repeated")));
            }
        }
        if self.estimator == EstimatorKind::Mmd {
            match self.kernel {
                Some(k) => {
                    k.kernel()?;
                }
                None => return Err(Error::input("MMD schedule lacks a kernel")),
            }
        }
        Ok(())
    }
}

/// Evaluator for `cfg.estimator` plus the resolved kernel spec.
fn auto_evaluator<'a>(
    reference: &'a ReferenceSet,
    cfg: &CalibrationConfig,
) -> Result<(Box<dyn BootstrapEvaluator + 'a>, Option<KernelSpec>)> {
    match cfg.estimator {
        EstimatorKind::Mmd => {
            let spec = resolve_kernel(reference, cfg)?;
            let kernel = spec.kernel()?;
            let eval: Box<dyn BootstrapEvaluator> = if reference.len() <= GRAM_MAX_N {
                Box::new(MmdGramEvaluator::new(reference, &kernel))
            } else {
                Box::new(MmdDirectEvaluator::new(reference, kernel))
            };
            Ok((eval, Some(spec)))
        }
        EstimatorKind::MeanDiff => Ok((
            Box::new(GenericEvaluator::new(reference, MeanDifference)),
            None,
        )),
    }
}

fn resolve_kernel(reference: &ReferenceSet, cfg: &CalibrationConfig) -> Result<KernelSpec> {
    let rows: Vec<&[f64]> = reference.rows().collect();
    cfg.kernel.resolve(&rows)
}

fn kernel_for_schedule(
    reference: &ReferenceSet,
    cfg: &CalibrationConfig,
) -> Result<Option<KernelSpec>> {
    match cfg.estimator {
        EstimatorKind::Mmd => resolve_kernel(reference, cfg).map(Some),
        EstimatorKind::MeanDiff => Ok(None),
    }
}

/// Runs `algorithm` with the default evaluator for `cfg.estimator`.
pub fn configure(
    reference: &ReferenceSet,
    cfg: &CalibrationConfig,
    algorithm: Algorithm,
) -> Result<ThresholdSchedule> {
    cfg.validate()?;
    let (eval, kernel) = auto_evaluator(reference, cfg)?;
    match algorithm {
        Algorithm::Calm => calm_with(reference, cfg, eval.as_ref(), kernel),
        Algorithm::TimeInvariant => time_invariant_with(reference, cfg, eval.as_ref(), kernel),
        Algorithm::LsddInc => lsdd_inc_with(reference, cfg, eval.as_ref(), kernel),
    }
}

pub fn configure_calm(reference: &ReferenceSet, cfg: &CalibrationConfig) -> Result<ThresholdSchedule> {
    configure(reference, cfg, Algorithm::Calm)
}

pub fn configure_time_invariant(
    reference: &ReferenceSet,
    cfg: &CalibrationConfig,
) -> Result<ThresholdSchedule> {
    configure(reference, cfg, Algorithm::TimeInvariant)
}

pub fn configure_lsdd_inc_baseline(
    reference: &ReferenceSet,
    cfg: &CalibrationConfig,
) -> Result<ThresholdSchedule> {
    configure(reference, cfg, Algorithm::LsddInc)
}

/// [`configure_calm`] with a caller-supplied evaluator.
pub fn configure_calm_with(
    reference: &ReferenceSet,
    cfg: &CalibrationConfig,
    evaluator: &dyn BootstrapEvaluator,
) -> Result<ThresholdSchedule> {
    cfg.validate()?;
    let kernel = kernel_for_schedule(reference, cfg)?;
    calm_with(reference, cfg, evaluator, kernel)
}

/// [`configure_time_invariant`] with a caller-supplied evaluator.
pub fn configure_time_invariant_with(
    reference: &ReferenceSet,
    cfg: &CalibrationConfig,
    evaluator: &dyn BootstrapEvaluator,
) -> Result<ThresholdSchedule> {
    cfg.validate()?;
    let kernel = kernel_for_schedule(reference, cfg)?;
    time_invariant_with(reference, cfg, evaluator, kernel)
}

/// [`configure_lsdd_inc_baseline`] with a caller-supplied evaluator.
pub fn configure_lsdd_inc_baseline_with(
    reference: &ReferenceSet,
    cfg: &CalibrationConfig,
    evaluator: &dyn BootstrapEvaluator,
) -> Result<ThresholdSchedule> {
    cfg.validate()?;
    let kernel = kernel_for_schedule(reference, cfg)?;
    lsdd_inc_with(reference, cfg, evaluator, kernel)
}

fn bootstrap_partition(cfg: &CalibrationConfig, n: usize, holdout: usize, b: u64) -> Result<Partition> {
    let mut r = rng::stream(cfg.seed, domain::BOOTSTRAP, b);
    split_without_replacement(n, holdout, &mut r)
}

fn calm_with(
    reference: &ReferenceSet,
    cfg: &CalibrationConfig,
    evaluator: &dyn BootstrapEvaluator,
    kernel: Option<KernelSpec>,
) -> Result<ThresholdSchedule> {
    let n = reference.len();
    let w = cfg.window;
    let stream_len = 2 * w - 1;
    if n < stream_len + 2 {
        return Err(Error::input(format!(
            "reference set of size {n} is too small for window {w}: need N - 2W + 1 >= 2"
        )));
    }
    cfg.warn_on_weak_settings();

    let rows: Vec<Vec<f64>> = (1..=cfg.bootstraps as u64)
        .into_par_iter()
        .map(|b| {
            let p = bootstrap_partition(cfg, n, stream_len, b)?;
            evaluator.stream_statistics(&p, w)
        })
        .collect::<Result<_>>()?;
    let table: Vec<f64> = rows.into_iter().flatten().collect();
    let out = conditional_thresholds(&table, w, cfg.alpha(), cfg.min_survivors)?;

    let frozen = bootstrap_partition(cfg, n, stream_len, 0)?;
    Ok(schedule(
        Algorithm::Calm,
        reference,
        cfg,
        kernel,
        frozen,
        out.thresholds,
        out.survivor_counts,
    ))
}

fn time_invariant_with(
    reference: &ReferenceSet,
    cfg: &CalibrationConfig,
    evaluator: &dyn BootstrapEvaluator,
    kernel: Option<KernelSpec>,
) -> Result<ThresholdSchedule> {
    let n = reference.len();
    let w = cfg.window;
    if n < 2 * w {
        return Err(Error::input(format!(
            "reference set of size {n} is too small for window {w}: need N >= 2W"
        )));
    }
    let stats: Vec<f64> = (1..=cfg.bootstraps as u64)
        .into_par_iter()
        .map(|b| {
            let p = bootstrap_partition(cfg, n, w, b)?;
            Ok(evaluator.stream_statistics(&p, w)?[0])
        })
        .collect::<Result<_>>()?;
    let h = empirical_upper_quantile(&stats, 1.0 - cfg.alpha())?;
    let frozen = bootstrap_partition(cfg, n, w, 0)?;
    Ok(schedule(
        Algorithm::TimeInvariant,
        reference,
        cfg,
        kernel,
        frozen,
        vec![h],
        vec![cfg.bootstraps],
    ))
}

/// Monte Carlo means of the statistic for a `(N - W, W)` split and for two
/// disjoint windows of size `W`.
fn null_expectations(
    n: usize,
    cfg: &CalibrationConfig,
    evaluator: &dyn BootstrapEvaluator,
) -> Result<(f64, f64)> {
    let w = cfg.window;
    let draws = cfg.expectation_samples.max(1);
    let pairs: Vec<(f64, f64)> = (0..draws as u64)
        .into_par_iter()
        .map(|e| {
            let mut r = rng::stream(cfg.seed, domain::EXPECTATION, e);
            let p = split_without_replacement(n, w, &mut r)?;
            let large = evaluator.stream_statistics(&p, w)?[0];
            let both = rand::seq::index::sample(&mut r, n, 2 * w).into_vec();
            let small = evaluator.statistic(&both[..w], &both[w..])?;
            Ok((large, small))
        })
        .collect::<Result<_>>()?;
    let k = pairs.len() as f64;
    let large = pairs.iter().map(|p| p.0).sum::<f64>() / k;
    let small = pairs.iter().map(|p| p.1).sum::<f64>() / k;
    Ok((large, small))
}

/// Shifted baseline threshold `E_large + (h_small - E_small)`.
pub fn shifted_threshold(h_small: f64, mean_large: f64, mean_small: f64) -> f64 {
    mean_large + (h_small - mean_small)
}

fn lsdd_inc_with(
    reference: &ReferenceSet,
    cfg: &CalibrationConfig,
    evaluator: &dyn BootstrapEvaluator,
    kernel: Option<KernelSpec>,
) -> Result<ThresholdSchedule> {
    let n = reference.len();
    let w = cfg.window;
    if n < 2 * w {
        return Err(Error::input(format!(
            "reference set of size {n} is too small for window {w}: need N >= 2W"
        )));
    }
    let stats: Vec<f64> = (1..=cfg.bootstraps as u64)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::stream(cfg.seed, domain::WITH_REPLACEMENT, b);
            let x = sample_with_replacement(n, w, &mut r);
            let y = sample_with_replacement(n, w, &mut r);
            evaluator.statistic(&x, &y)
        })
        .collect::<Result<_>>()?;
    let h_small = empirical_upper_quantile(&stats, 1.0 - cfg.alpha())?;
    let (mean_large, mean_small) = null_expectations(n, cfg, evaluator)?;
    let h = shifted_threshold(h_small, mean_large, mean_small);
    let frozen = Partition {
        reference: (0..n).collect(),
        holdout: Vec::new(),
    };
    Ok(schedule(
        Algorithm::LsddInc,
        reference,
        cfg,
        kernel,
        frozen,
        vec![h],
        vec![cfg.bootstraps],
    ))
}

fn schedule(
    algorithm: Algorithm,
    reference: &ReferenceSet,
    cfg: &CalibrationConfig,
    kernel: Option<KernelSpec>,
    frozen: Partition,
    thresholds: Vec<f64>,
    survivor_counts: Vec<usize>,
) -> ThresholdSchedule {
    ThresholdSchedule {
        schema_version: SCHEMA_VERSION,
        algorithm,
        estimator: cfg.estimator,
        kernel,
        n: reference.len(),
        d: reference.dim(),
        window: cfg.window,
        m: frozen.reference.len(),
        alpha: cfg.alpha(),
        ert: cfg.ert,
        bootstraps: cfg.bootstraps,
        seed: cfg.seed,
        ref_window_indices: frozen.reference,
        holdout_indices: frozen.holdout,
        thresholds,
        survivor_counts,
    }
}

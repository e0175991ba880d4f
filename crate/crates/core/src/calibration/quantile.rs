use crate::error::{Error, Result};

/// Rank `k = ceil(level * n)` (1-based), robust to `level * n` landing a
/// rounding error above an integer.
fn upper_rank(level: f64, n: usize) -> usize {
    let x = level * n as f64;
    let r = x.round();
    let k = if (x - r).abs() <= 1e-9 * (n as f64).max(1.0) {
        r
    } else {
        x.ceil()
    };
    (k as usize).clamp(1, n)
}

/// The `ceil(level * n)`-th smallest sample (no interpolation).
///
/// At most a fraction `1 - level` of the samples strictly exceeds the result.
pub fn empirical_upper_quantile(samples: &[f64], level: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::input("quantile of an empty sample"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::input(format!("quantile level must be in (0, 1); got {level}")));
    }
    let k = upper_rank(level, samples.len());
    let mut buf = samples.to_vec();
    let (_, v, _) = buf.select_nth_unstable_by(k - 1, f64::total_cmp);
    Ok(*v)
}

/// Outcome of the sequential quantile-and-filter pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalThresholds {
    pub thresholds: Vec<f64>,
    /// Number of trajectories entering each step.
    pub survivor_counts: Vec<usize>,
}

/// Sequential conditional quantiles over a `B x T` table of bootstrap
/// statistics (row `b` holds trajectory `b`).
///
/// At step `t` the threshold is the empirical `(1 - alpha)`-quantile over the
/// trajectories that stayed at or below every earlier threshold; a trajectory
/// survives step `t` when its statistic is `<= threshold`. Fails when fewer
/// than `max(min_survivors, 1)` trajectories enter a step.
pub fn conditional_thresholds(
    table: &[f64],
    steps: usize,
    alpha: f64,
    min_survivors: usize,
) -> Result<ConditionalThresholds> {
    if steps == 0 || !table.len().is_multiple_of(steps) {
        return Err(Error::input("statistics table is not a whole number of trajectories"));
    }
    let mut survivors: Vec<usize> = (0..table.len() / steps).collect();
    let mut thresholds = Vec::with_capacity(steps);
    let mut survivor_counts = Vec::with_capacity(steps);
    let mut values = Vec::with_capacity(survivors.len());
    for t in 0..steps {
        if survivors.len() < min_survivors.max(1) {
            return Err(Error::calibration(format!(
                "only {} bootstrap trajectories survive to step {} of {steps} \
                 (minimum {}); increase the number of bootstraps",
                survivors.len(),
                t + 1,
                min_survivors.max(1)
            )));
        }
        survivor_counts.push(survivors.len());
        values.clear();
        values.extend(survivors.iter().map(|&b| table[b * steps + t]));
        let h = empirical_upper_quantile(&values, 1.0 - alpha)?;
        thresholds.push(h);
        survivors.retain(|&b| table[b * steps + t] <= h);
    }
    Ok(ConditionalThresholds {
        thresholds,
        survivor_counts,
    })
}

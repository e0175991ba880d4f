//! Runtime summaries: miscalibration, reduction, geometric fit diagnostics.

use serde::{Deserialize, Serialize};

/// Two-sided 99% standard normal quantile.
pub const Z_99: f64 = 2.575_829_303_548_901;

/// Two-sample Kolmogorov-Smirnov distance `sup |F_a - F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = if a[i].total_cmp(&b[j]).is_le() { a[i] } else { b[j] };
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// CDF of the geometric law on `{1, 2, ...}` with success probability `theta`.
pub fn geometric_cdf(k: u64, theta: f64) -> f64 {
    if k == 0 {
        0.0
    } else {
        1.0 - (1.0 - theta).powf(k as f64)
    }
}

/// Smallest `k >= 1` with `geometric_cdf(k) >= u`.
pub fn geometric_quantile(u: f64, theta: f64) -> u64 {
    if theta >= 1.0 || u <= 0.0 {
        return 1;
    }
    let q = ((1.0 - u).ln() / (1.0 - theta).ln()).ceil();
    q.max(1.0) as u64
}

/// KS distance between the empirical law of `runtimes` and the geometric
/// law with rate `theta`, both on `{1, 2, ...}`.
pub fn ks_geometric(runtimes: &[u64], theta: f64) -> f64 {
    if runtimes.is_empty() {
        return 0.0;
    }
    let mut sorted = runtimes.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let k = sorted[i];
        // just below k
        d = d.max((i as f64 / n - geometric_cdf(k - 1, theta)).abs());
        while i < sorted.len() && sorted[i] == k {
            i += 1;
        }
        d = d.max((i as f64 / n - geometric_cdf(k, theta)).abs());
    }
    d
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QqPoint {
    pub empirical: u64,
    pub theoretical: u64,
}

/// Sorted runtimes paired with geometric quantiles at `u_i = (i - 0.5) / n`.
pub fn geometric_qq(runtimes: &[u64], theta: f64) -> Vec<QqPoint> {
    let mut sorted = runtimes.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as f64;
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, empirical)| QqPoint {
            empirical,
            theoretical: geometric_quantile((i as f64 + 0.5) / n, theta),
        })
        .collect()
}

/// Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n);
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HazardPoint {
    /// Runtime value (1-based test count).
    pub k: u64,
    pub at_risk: usize,
    pub events: usize,
    pub hazard: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Empirical `P(T = k | T >= k)` for `k = 1..=max_k` with Wilson 99%
/// intervals. A run censored at `c` counts as at risk for every `k <= c`.
/// Steps with nobody at risk report a hazard of 0.
pub fn hazard(runtimes: &[u64], censored: &[u64], max_k: u64) -> Vec<HazardPoint> {
    (1..=max_k)
        .map(|k| {
            let events = runtimes.iter().filter(|&&t| t == k).count();
            let at_risk = runtimes.iter().filter(|&&t| t >= k).count()
                + censored.iter().filter(|&&c| c >= k).count();
            let (lower, upper) = wilson_interval(events, at_risk, Z_99);
            HazardPoint {
                k,
                at_risk,
                events,
                hazard: if at_risk > 0 {
                    events as f64 / at_risk as f64
                } else {
                    0.0
                },
                lower,
                upper,
            }
        })
        .collect()
}

pub fn mean_u64(xs: &[u64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().map(|&x| x as f64).sum::<f64>() / xs.len() as f64
}

pub fn miscalibration(art: f64, ert: f64) -> f64 {
    (art - ert).abs() / ert
}

pub fn reduction(art: f64, add: f64) -> f64 {
    (art - add) / art
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    #[test]
    fn ks_examples() {
        assert_eq!(ks_two_sample(&[1.0, 2.0, 5.0], &[1.0, 2.0, 5.0]), 0.0);
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[3.0, 4.0]), 1.0);
        assert_eq!(ks_two_sample(&[1.0, 3.0], &[2.0, 4.0]), 0.5);
        assert_eq!(ks_two_sample(&[3.0, 4.0], &[1.0, 2.0]), 1.0);
        // ties across samples are stepped together
        assert_eq!(ks_two_sample(&[1.0, 1.0, 2.0], &[1.0, 2.0, 2.0]), 1.0 / 3.0);
    }

    #[test]
    fn geometric_quantile_examples() {
        assert_eq!(geometric_quantile(0.75, 0.5), 2);
        assert_eq!(geometric_quantile(0.5, 0.5), 1);
        assert_eq!(geometric_quantile(0.01, 0.01), 1);
        assert_eq!(geometric_quantile(0.3, 1.0), 1);
    }

    #[test]
    fn qq_of_constant_runtimes() {
        let qq = geometric_qq(&[7; 5], 0.3);
        assert!(qq.iter().all(|p| p.empirical == 7));
        assert_eq!(qq.len(), 5);
        assert!(qq.windows(2).all(|w| w[0].theoretical <= w[1].theoretical));
    }

    fn geometric_draws(theta: f64, n: usize, seed: u64) -> Vec<u64> {
        let mut r = rng::stream(seed, 0x55, 0);
        (0..n)
            .map(|_| geometric_quantile(r.random::<f64>(), theta))
            .collect()
    }

    #[test]
    fn geometric_samples_fit_their_own_law() {
        let theta = 1.0 / 128.0;
        let draws = geometric_draws(theta, 50_000, 1);
        let d = ks_geometric(&draws, theta);
        assert!(d < ks_critical_1pct(draws.len()), "{d}");
        let qq = geometric_qq(&draws, theta);
        let central = &qq[500..49_500];
        for p in central {
            let gap = (p.empirical as f64 - p.theoretical as f64).abs();
            assert!(gap <= (0.1 * p.theoretical as f64).max(2.0), "{p:?}");
        }
        assert!(ks_geometric(&draws, 1.0 / 100.0) > 0.05);
    }

    #[test]
    fn ks_geometric_exact_small_case() {
        // F_n = 1/2 on [1, 3) and 1 from 3; F(1)=0.5, F(2)=0.75, F(3)=0.875
        let d = ks_geometric(&[1, 3], 0.5);
        assert!((d - 0.25).abs() < 1e-12, "{d}");
    }

    #[test]
    fn wilson_contains_truth_and_is_ordered() {
        let (lo, hi) = wilson_interval(10, 1000, Z_99);
        assert!(lo < 0.01 && 0.01 < hi);
        assert!(lo > 0.0 && hi < 0.03);
        let (lo, hi) = wilson_interval(0, 50, Z_99);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0);
    }

    #[test]
    fn hazard_of_geometric_draws_is_flat() {
        let theta = 0.1;
        let draws = geometric_draws(theta, 20_000, 2);
        let h = hazard(&draws, &[], 20);
        let inside = h.iter().filter(|p| p.lower <= theta && theta <= p.upper).count();
        assert!(inside >= 18, "{inside} of 20");
        assert_eq!(h[0].at_risk, 20_000);
        let censored = hazard(&[1], &[5], 3);
        assert_eq!(censored[2].at_risk, 1);
        assert_eq!(censored[0].events, 1);
    }

    #[test]
    fn ratios() {
        assert!((miscalibration(105.0, 100.0) - 0.05).abs() < 1e-12);
        assert!((reduction(100.0, 5.0) - 0.95).abs() < 1e-12);
        assert_eq!(mean_u64(&[1, 2, 3]), 2.0);
    }
}

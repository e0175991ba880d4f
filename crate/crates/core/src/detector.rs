//! Operational phase: a streaming state machine that compares the sliding
//! statistic against a calibrated threshold schedule.
//!
//! Times are 1-based: the first observation arrives at `t = 1`. In
//! from-window mode the first test happens at `t = W` against schedule
//! position 0 and position `min(t, 2W - 1) - W` is used afterwards. In
//! from-start mode `W` held-out reference points are prepended, so the window
//! is full from `t = 0` and position `min(W + t, 2W - 1) - W` applies.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::calibration::ThresholdSchedule;
use crate::data::ReferenceSet;
use crate::error::{Error, Result};
use crate::kernel_metrics::{EstimatorKind, MeanDiffStream, MmdCache, WindowStatistic};

pub const DEFAULT_MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StartMode {
    #[serde(rename = "from-window")]
    FromWindow,
    #[serde(rename = "from-start")]
    FromStart,
}

impl StartMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            StartMode::FromWindow => "from-window",
            StartMode::FromStart => "from-start",
        }
    }
}

impl std::str::FromStr for StartMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "from-window" | "from_window" => Ok(StartMode::FromWindow),
            "from-start" | "from_start" => Ok(StartMode::FromStart),
            other => Err(format!(
                "unknown mode `{other}` (expected from-window or from-start)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    WarmingUp,
    Running,
    Detected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    /// Stream time of the detection; equals the runtime `T`.
    pub t: u64,
    pub statistic: f64,
    pub threshold: f64,
    pub runtime: u64,
    /// Number of tests performed up to and including the detection:
    /// `T - W + 1` in from-window mode and `T` in from-start mode.
    pub post_warmup_runtime: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    /// The test window is not yet full.
    NoTest,
    Pass { statistic: f64, threshold: f64 },
    Detection(DetectionEvent),
}

impl StepOutcome {
    pub fn statistic(&self) -> Option<f64> {
        match *self {
            StepOutcome::NoTest => None,
            StepOutcome::Pass { statistic, .. } => Some(statistic),
            StepOutcome::Detection(e) => Some(e.statistic),
        }
    }

    pub fn threshold(&self) -> Option<f64> {
        match *self {
            StepOutcome::NoTest => None,
            StepOutcome::Pass { threshold, .. } => Some(threshold),
            StepOutcome::Detection(e) => Some(e.threshold),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunOutcome {
    Detection(DetectionEvent),
    /// No detection within the step budget or before the stream ended.
    Timeout { steps: u64 },
}

/// Sliding-window engine for the estimator named in `schedule`, fed with the
/// frozen reference window.
pub fn build_engine(
    schedule: &ThresholdSchedule,
    reference: &ReferenceSet,
) -> Result<Box<dyn WindowStatistic>> {
    schedule.check_against(reference)?;
    let rows = reference.select(&schedule.ref_window_indices)?;
    match schedule.estimator {
        EstimatorKind::Mmd => {
            let spec = schedule
                .kernel
                .ok_or_else(|| Error::input("MMD schedule lacks a kernel"))?;
            Ok(Box::new(MmdCache::new(&rows, schedule.window, spec.kernel()?)?))
        }
        EstimatorKind::MeanDiff => Ok(Box::new(MeanDiffStream::new(&rows, schedule.window)?)),
    }
}

#[derive(Clone)]
pub struct Detector {
    thresholds: Vec<f64>,
    window: usize,
    engine: Box<dyn WindowStatistic>,
    mode: StartMode,
    t: u64,
    status: Status,
    attempts: usize,
}

impl std::fmt::Debug for Detector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Detector")
            .field("window", &self.window)
            .field("mode", &self.mode)
            .field("t", &self.t)
            .field("status", &self.status)
            .finish_non_exhaustive()
    }
}

impl Detector {
    /// From-window detector over an arbitrary engine. The engine must be
    /// empty and its window size fixes `W`.
    pub fn new(thresholds: Vec<f64>, engine: Box<dyn WindowStatistic>) -> Result<Self> {
        if thresholds.is_empty() {
            return Err(Error::input("threshold schedule is empty"));
        }
        if thresholds.iter().any(|h| h.is_nan()) {
            return Err(Error::input("threshold schedule contains NaN"));
        }
        if engine.filled() != 0 {
            return Err(Error::State("engine already holds observations".into()));
        }
        Ok(Self {
            window: engine.window_size(),
            thresholds,
            engine,
            mode: StartMode::FromWindow,
            t: 0,
            status: Status::WarmingUp,
            attempts: 0,
        })
    }

    pub fn from_window(schedule: &ThresholdSchedule, reference: &ReferenceSet) -> Result<Self> {
        Self::new(schedule.thresholds.clone(), build_engine(schedule, reference)?)
    }

    /// Detector that tests from `t = 1`, primed with `W` observations drawn
    /// without replacement from the schedule's held-out points.
    pub fn from_start<R: Rng + ?Sized>(
        schedule: &ThresholdSchedule,
        reference: &ReferenceSet,
        rng: &mut R,
        max_attempts: usize,
    ) -> Result<Self> {
        let pool = reference.select(&schedule.holdout_indices)?;
        Self::from_window(schedule, reference)?.prepend(&pool, rng, max_attempts)
    }

    /// Switches a fresh detector to from-start mode: fills the window with
    /// `W` points sampled without replacement from `pool` until the initial
    /// statistic is strictly below the first threshold, redrawing at most
    /// `max_attempts` times.
    pub fn prepend<R: Rng + ?Sized>(
        mut self,
        pool: &[&[f64]],
        rng: &mut R,
        max_attempts: usize,
    ) -> Result<Self> {
        if self.t != 0 || self.mode != StartMode::FromWindow {
            return Err(Error::State("prepend requires a fresh detector".into()));
        }
        let w = self.window;
        if pool.len() < w {
            return Err(Error::input(format!(
                "need at least W = {w} held-out points to prepend; the schedule has {}",
                pool.len()
            )));
        }
        let h = self.thresholds[0];
        let mut last = f64::NAN;
        for attempt in 1..=max_attempts {
            self.engine.clear();
            for i in index::sample(rng, pool.len(), w) {
                self.engine.push(pool[i])?;
            }
            let s0 = self
                .engine
                .statistic()
                .ok_or_else(|| Error::State("engine did not fill its window".into()))?;
            if s0 < h {
                self.mode = StartMode::FromStart;
                self.status = Status::Running;
                self.attempts = attempt;
                return Ok(self);
            }
            last = s0;
        }
        Err(Error::Initialization {
            attempts: max_attempts,
            reason: format!("initial statistic {last} never fell below the first threshold {h}"),
        })
    }

    pub fn window_size(&self) -> usize {
        self.window
    }

    pub fn mode(&self) -> StartMode {
        self.mode
    }

    pub fn status(&self) -> Status {
        self.status
    }

    /// Observations consumed so far.
    pub fn time(&self) -> u64 {
        self.t
    }

    /// Prepend draws used by a from-start detector (0 otherwise).
    pub fn init_attempts(&self) -> usize {
        self.attempts
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    /// Schedule position used for a test at time `t`.
    pub fn threshold_position(&self, t: u64) -> usize {
        let w = self.window as u64;
        let pos = match self.mode {
            StartMode::FromWindow => t.clamp(w, 2 * w - 1) - w,
            StartMode::FromStart => (w + t).min(2 * w - 1) - w,
        };
        (pos as usize).min(self.thresholds.len() - 1)
    }

    pub fn step(&mut self, z: &[f64]) -> Result<StepOutcome> {
        if self.status == Status::Detected {
            return Err(Error::State(format!(
                "detector already fired at t = {}",
                self.t
            )));
        }
        let statistic = self.engine.push(z)?;
        self.t += 1;
        let Some(statistic) = statistic else {
            return Ok(StepOutcome::NoTest);
        };
        self.status = Status::Running;
        let threshold = self.thresholds[self.threshold_position(self.t)];
        if statistic > threshold {
            self.status = Status::Detected;
            let post = match self.mode {
                StartMode::FromWindow => self.t + 1 - self.window as u64,
                StartMode::FromStart => self.t,
            };
            Ok(StepOutcome::Detection(DetectionEvent {
                t: self.t,
                statistic,
                threshold,
                runtime: self.t,
                post_warmup_runtime: post,
            }))
        } else {
            Ok(StepOutcome::Pass {
                statistic,
                threshold,
            })
        }
    }

    /// Steps through `stream` until a detection, `max_steps` observations, or
    /// the end of the stream.
    pub fn run_to_detection<I, R>(&mut self, stream: I, max_steps: u64) -> Result<RunOutcome>
    where
        I: IntoIterator<Item = R>,
        R: AsRef<[f64]>,
    {
        let mut steps = 0;
        for z in stream {
            if steps >= max_steps {
                break;
            }
            steps += 1;
            if let StepOutcome::Detection(e) = self.step(z.as_ref())? {
                return Ok(RunOutcome::Detection(e));
            }
        }
        Ok(RunOutcome::Timeout { steps })
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    use rand::Rng;
    use rand_distr::StandardNormal;

    use super::*;
    use crate::calibration::{configure_calm, CalibrationConfig};
    use crate::kernel_metrics::{mmd2_batch, CountingKernel, RbfKernel};
    use crate::rng;

    /// Emits the first coordinate of the newest observation once `w` are held.
    #[derive(Clone)]
    struct Passthrough {
        w: usize,
        filled: usize,
        last: f64,
        evaluations: Arc<AtomicUsize>,
    }

    impl Passthrough {
        fn new(w: usize) -> Self {
            Self {
                w,
                filled: 0,
                last: 0.0,
                evaluations: Arc::new(AtomicUsize::new(0)),
            }
        }
    }

    impl WindowStatistic for Passthrough {
        fn window_size(&self) -> usize {
            self.w
        }
        fn filled(&self) -> usize {
            self.filled
        }
        fn push(&mut self, z: &[f64]) -> Result<Option<f64>> {
            self.filled = (self.filled + 1).min(self.w);
            self.last = z[0];
            Ok((self.filled == self.w).then_some(self.last))
        }
        fn statistic(&self) -> Option<f64> {
            self.evaluations.fetch_add(1, Ordering::Relaxed);
            (self.filled == self.w).then_some(self.last)
        }
        fn clear(&mut self) {
            self.filled = 0;
        }
        fn box_clone(&self) -> Box<dyn WindowStatistic> {
            Box::new(self.clone())
        }
    }

    fn gaussian(n: usize, d: usize, seed: u64) -> ReferenceSet {
        let mut r = rng::stream(seed, 0xAB, 1);
        let v = (0..n * d).map(|_| r.sample(StandardNormal)).collect();
        ReferenceSet::from_flat(v, d).unwrap()
    }

    fn schedule(n: usize, w: usize, seed: u64) -> (ReferenceSet, ThresholdSchedule) {
        let data = gaussian(n, 2, seed);
        let cfg = CalibrationConfig::new(w, 20.0, 500, seed);
        let s = configure_calm(&data, &cfg).unwrap();
        (data, s)
    }

    fn zeros(k: usize) -> Vec<Vec<f64>> {
        vec![vec![0.0]; k]
    }

    #[test]
    fn from_window_threshold_lookup() {
        let w = 4;
        let thresholds: Vec<f64> = (0..w).map(|i| 10.0 + i as f64).collect();
        let mut d = Detector::new(thresholds.clone(), Box::new(Passthrough::new(w))).unwrap();
        for _ in 1..w {
            assert_eq!(d.step(&[0.0]).unwrap(), StepOutcome::NoTest);
            assert_eq!(d.status(), Status::WarmingUp);
        }
        let mut seen = Vec::new();
        for _ in w..=3 * w {
            seen.push(d.step(&[0.0]).unwrap().threshold().unwrap());
        }
        assert_eq!(seen[0], thresholds[0]);
        assert_eq!(&seen[..w], &thresholds[..]);
        assert_eq!(*seen.last().unwrap(), thresholds[w - 1]);
    }

    #[test]
    fn from_start_threshold_lookup() {
        let w = 5;
        let thresholds: Vec<f64> = (0..w).map(|i| 1.0 + i as f64).collect();
        let pool = zeros(2 * w - 1);
        let pool: Vec<&[f64]> = pool.iter().map(|r| r.as_slice()).collect();
        let engine = Passthrough::new(w);
        let calls = engine.evaluations.clone();
        let d = Detector::new(thresholds.clone(), Box::new(engine)).unwrap();
        let mut d = d
            .prepend(&pool, &mut rng::stream(1, rng::domain::PREPEND, 0), 10)
            .unwrap();
        assert_eq!(calls.load(Ordering::Relaxed), 1);
        assert_eq!(d.init_attempts(), 1);
        assert_eq!(d.threshold_position(1), 1);
        assert_eq!(d.threshold_position(w as u64 - 1), w - 1);
        assert_eq!(d.threshold_position(w as u64), w - 1);
        let first = d.step(&[0.0]).unwrap();
        assert_eq!(first.threshold(), Some(thresholds[1]));
    }

    #[test]
    fn from_start_gives_up_after_max_attempts() {
        let pool = vec![vec![5.0]; 3];
        let pool: Vec<&[f64]> = pool.iter().map(|r| r.as_slice()).collect();
        let d = Detector::new(vec![1.0, 1.0], Box::new(Passthrough::new(2))).unwrap();
        let err = d
            .prepend(&pool, &mut rng::stream(1, rng::domain::PREPEND, 0), 7)
            .unwrap_err();
        assert!(matches!(err, Error::Initialization { attempts: 7, .. }), "{err}");
    }

    #[test]
    fn from_start_needs_enough_holdout() {
        let pool = [[0.0]];
        let pool: Vec<&[f64]> = pool.iter().map(|r| r.as_slice()).collect();
        let d = Detector::new(vec![1.0, 1.0], Box::new(Passthrough::new(2))).unwrap();
        let err = d.prepend(&pool, &mut rng::stream(1, 3, 0), 7).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn forced_threshold_fires_at_that_position() {
        let w = 3;
        let mut thresholds = vec![f64::INFINITY; w];
        thresholds[1] = f64::NEG_INFINITY;
        let mut d = Detector::new(thresholds, Box::new(Passthrough::new(w))).unwrap();
        let out = d.run_to_detection(zeros(100), 100).unwrap();
        let RunOutcome::Detection(e) = out else {
            panic!("expected a detection")
        };
        assert_eq!(e.t, w as u64 + 1);
        assert_eq!(e.post_warmup_runtime, 2);
        assert!(d.step(&[0.0]).is_err());
    }

    #[test]
    fn always_and_never_detect() {
        let w = 4;
        let mut d = Detector::new(vec![f64::NEG_INFINITY; w], Box::new(Passthrough::new(w))).unwrap();
        match d.run_to_detection(zeros(10), 10).unwrap() {
            RunOutcome::Detection(e) => {
                assert_eq!(e.runtime, w as u64);
                assert_eq!(e.post_warmup_runtime, 1);
            }
            other => panic!("{other:?}"),
        }

        let pool = zeros(2 * w - 1);
        let pool: Vec<&[f64]> = pool.iter().map(|r| r.as_slice()).collect();
        let mut thresholds = vec![f64::NEG_INFINITY; w];
        thresholds[0] = 1.0;
        let mut d = Detector::new(thresholds, Box::new(Passthrough::new(w)))
            .unwrap()
            .prepend(&pool, &mut rng::stream(2, 3, 0), 5)
            .unwrap();
        match d.run_to_detection(zeros(10), 10).unwrap() {
            RunOutcome::Detection(e) => assert_eq!(e.runtime, 1),
            other => panic!("{other:?}"),
        }

        let mut d = Detector::new(vec![f64::INFINITY; w], Box::new(Passthrough::new(w))).unwrap();
        assert_eq!(
            d.run_to_detection(zeros(50), 20).unwrap(),
            RunOutcome::Timeout { steps: 20 }
        );
        let mut d = Detector::new(vec![f64::INFINITY; w], Box::new(Passthrough::new(w))).unwrap();
        assert_eq!(
            d.run_to_detection(zeros(2), 20).unwrap(),
            RunOutcome::Timeout { steps: 2 }
        );
    }

    #[test]
    fn uniform_statistic_gives_geometric_runtimes() {
        let alpha = 0.05;
        let runs = 4000;
        let mut r = rng::stream(3, rng::domain::STREAM, 0);
        let mut total = 0u64;
        for _ in 0..runs {
            let mut d =
                Detector::new(vec![1.0 - alpha], Box::new(Passthrough::new(1))).unwrap();
            let stream = std::iter::repeat_with(|| vec![r.random::<f64>()]);
            match d.run_to_detection(stream, 1_000_000).unwrap() {
                RunOutcome::Detection(e) => total += e.post_warmup_runtime,
                RunOutcome::Timeout { .. } => panic!("timeout"),
            }
        }
        let mean = total as f64 / runs as f64;
        let tol = 3.0 * (1.0 / alpha) / (runs as f64).sqrt();
        assert!((mean - 1.0 / alpha).abs() < tol, "mean runtime {mean}");
    }

    #[test]
    fn statistics_match_batch_replay() {
        let (data, s) = schedule(80, 5, 4);
        let mut d = Detector::from_window(&s, &data).unwrap();
        let reference = data.select(&s.ref_window_indices).unwrap();
        let kernel = s.kernel.unwrap().kernel().unwrap();
        let mut r = rng::stream(4, rng::domain::STREAM, 0);
        let stream: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..2).map(|_| r.sample::<f64, _>(StandardNormal) * 0.3).collect())
            .collect();
        for (i, z) in stream.iter().enumerate() {
            let out = match d.step(z) {
                Ok(o) => o,
                Err(_) => break,
            };
            if i + 1 < 5 {
                assert_eq!(out, StepOutcome::NoTest);
                continue;
            }
            let batch = mmd2_batch(&reference, &stream[i + 1 - 5..=i], &kernel).unwrap();
            let got = out.statistic().unwrap();
            assert!((got - batch).abs() <= 1e-8 * (1.0 + batch.abs()));
            if matches!(out, StepOutcome::Detection(_)) {
                break;
            }
        }
    }

    #[test]
    fn constant_stream_gives_constant_statistic() {
        let (data, mut s) = schedule(60, 4, 5);
        s.thresholds = vec![1e300; 4];
        let mut d = Detector::from_window(&s, &data).unwrap();
        let z = data.row(s.ref_window_indices[0]).to_vec();
        let stats: Vec<f64> = (0..20)
            .filter_map(|_| d.step(&z).unwrap().statistic())
            .collect();
        assert_eq!(stats.len(), 17);
        assert!(stats.iter().all(|&v| (v - stats[0]).abs() < 1e-10));
    }

    #[test]
    fn step_costs_m_plus_w_minus_one_kernel_calls() {
        let data = gaussian(50, 3, 6);
        let m = 30;
        let w = 6;
        let rows: Vec<&[f64]> = data.rows().take(m).collect();
        let counting = CountingKernel::new(RbfKernel::new(1.0).unwrap());
        let engine = MmdCache::new(&rows, w, counting.clone()).unwrap();
        let mut d = Detector::new(vec![f64::INFINITY; w], Box::new(engine)).unwrap();
        for (i, z) in data.rows().skip(m).enumerate() {
            counting.reset();
            d.step(z).unwrap();
            let expected = m + i.min(w - 1);
            assert_eq!(counting.count(), expected as u64);
        }
    }

    #[test]
    fn schedule_mismatch_is_rejected() {
        let (data, s) = schedule(60, 4, 7);
        let other = gaussian(61, 2, 7);
        assert!(matches!(Detector::from_window(&s, &other), Err(Error::InvalidInput(_))));
        let other = gaussian(60, 3, 7);
        assert!(matches!(
            Detector::from_window(&s, &other),
            Err(Error::DimensionMismatch { .. })
        ));
        let mut bad = s.clone();
        bad.ref_window_indices[0] = 60;
        assert!(Detector::from_window(&bad, &data).is_err());
        let mut d = Detector::from_window(&s, &data).unwrap();
        assert!(matches!(d.step(&[0.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn from_start_with_calibrated_schedule() {
        let (data, s) = schedule(60, 4, 8);
        let d = Detector::from_start(&s, &data, &mut rng::stream(8, 3, 0), 1000).unwrap();
        assert_eq!(d.mode(), StartMode::FromStart);
        assert!(d.init_attempts() >= 1);
    }

    #[test]
    fn mode_names_parse() {
        assert_eq!("from-window".parse::<StartMode>().unwrap(), StartMode::FromWindow);
        assert_eq!("from-start".parse::<StartMode>().unwrap(), StartMode::FromStart);
        assert!("later".parse::<StartMode>().is_err());
    }
}

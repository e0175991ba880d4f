//! File formats: headerless CSV observations, JSON schedules and reports,
//! CSV exports, and run configuration files.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! value reads back bit-identically.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::calibration::{Algorithm, CalibrationConfig, ThresholdSchedule, DEFAULT_BOOTSTRAPS};
use crate::data::ReferenceSet;
use crate::detector::StartMode;
use crate::error::{Error, Result};
use crate::kernel_metrics::{EstimatorKind, KernelSpec};
use crate::simbench::{BiasStudyResult, ExperimentReport, Problem};

/// Parses one comma-separated observation. `line_no` is 1-based and only
/// used in messages.
pub fn parse_observation(line: &str, line_no: usize) -> Result<Vec<f64>> {
    line.split(',')
        .map(|field| {
            let f = field.trim();
            let v: f64 = f.parse().map_err(|_| {
                Error::input(format!("line {line_no}: `{f}` is not a decimal number"))
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::input(format!("line {line_no}: non-finite value `{f}`")))
            }
        })
        .collect()
}

/// Lazily parses observations from a reader, skipping blank lines.
pub struct ObservationReader<R> {
    inner: R,
    line: String,
    line_no: usize,
    dim: Option<usize>,
}

impl<R: BufRead> ObservationReader<R> {
    pub fn new(inner: R) -> Self {
        Self {
            inner,
            line: String::new(),
            line_no: 0,
            dim: None,
        }
    }

    /// Requires every observation to have dimension `dim`.
    pub fn with_dim(inner: R, dim: usize) -> Self {
        Self {
            dim: Some(dim),
            ..Self::new(inner)
        }
    }
}

impl<R: BufRead> Iterator for ObservationReader<R> {
    type Item = Result<Vec<f64>>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.line.clear();
            match self.inner.read_line(&mut self.line) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e.into())),
            }
            self.line_no += 1;
            let text = self.line.trim();
            if text.is_empty() {
                continue;
            }
            let row = match parse_observation(text, self.line_no) {
                Ok(r) => r,
                Err(e) => return Some(Err(e)),
            };
            match self.dim {
                Some(d) if d != row.len() => {
                    return Some(Err(Error::DimensionMismatch {
                        expected: d,
                        got: row.len(),
                    }))
                }
                None => self.dim = Some(row.len()),
                _ => {}
            }
            return Some(Ok(row));
        }
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

/// Reads a headerless CSV of observations, one per row.
pub fn read_reference_csv(path: &Path) -> Result<ReferenceSet> {
    let mut values = Vec::new();
    let mut dim = 0;
    for row in ObservationReader::new(BufReader::new(open(path)?)) {
        let row = row?;
        dim = row.len();
        values.extend(row);
    }
    if values.is_empty() {
        return Err(Error::input(format!("{}: no observations", path.display())));
    }
    ReferenceSet::from_flat(values, dim)
}

pub fn write_reference_csv(path: &Path, data: &ReferenceSet) -> Result<()> {
    let mut w = BufWriter::new(create(path)?);
    for row in data.rows() {
        write_row(&mut w, row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_row<W: Write>(w: &mut W, row: &[f64]) -> Result<()> {
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            w.write_all(b",")?;
        }
        write!(w, "{v:?}")?;
    }
    w.write_all(b"\n")?;
    Ok(())
}

/// Pretty JSON followed by a newline.
pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(open(path)?))?)
}

pub fn load_schedule(path: &Path) -> Result<ThresholdSchedule> {
    let s: ThresholdSchedule = load_json(path)?;
    s.validate()?;
    Ok(s)
}

/// `config,runtime` for every completed no-change run.
pub fn write_runtimes_csv(path: &Path, report: &ExperimentReport) -> Result<()> {
    let mut w = BufWriter::new(create(path)?);
    writeln!(w, "config,runtime")?;
    let mut it = report.runtimes.iter();
    for c in &report.per_config {
        for t in it.by_ref().take(c.completed) {
            writeln!(w, "{},{t}", c.index)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_qq_csv(path: &Path, report: &ExperimentReport) -> Result<()> {
    let mut w = BufWriter::new(create(path)?);
    writeln!(w, "empirical,theoretical")?;
    for p in &report.qq {
        writeln!(w, "{},{}", p.empirical, p.theoretical)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_hazard_csv(path: &Path, report: &ExperimentReport) -> Result<()> {
    let mut w = BufWriter::new(create(path)?);
    writeln!(w, "k,at_risk,events,hazard,lower,upper")?;
    for h in &report.hazard {
        writeln!(
            w,
            "{},{},{},{:?},{:?},{:?}",
            h.k, h.at_risk, h.events, h.hazard, h.lower, h.upper
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_bias_csv(path: &Path, rows: &[BiasStudyResult]) -> Result<()> {
    let mut w = BufWriter::new(create(path)?);
    write_bias_rows(&mut w, rows)?;
    w.flush()?;
    Ok(())
}

pub fn write_bias_rows<W: Write>(w: &mut W, rows: &[BiasStudyResult]) -> Result<()> {
    writeln!(w, "dim,ks_with_replacement,ks_without_replacement")?;
    for r in rows {
        writeln!(
            w,
            "{},{:?},{:?}",
            r.dim, r.ks_with_replacement, r.ks_without_replacement
        )?;
    }
    Ok(())
}

/// Experiment section of a [`RunConfigFile`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub problem: Option<Problem>,
    pub ert: Option<Vec<f64>>,
    pub n: Option<usize>,
    pub configs: Option<usize>,
    pub runs: Option<usize>,
    pub power: Option<bool>,
    pub out: Option<PathBuf>,
}

/// JSON run configuration. Every field is optional; command-line flags take
/// precedence. Relative paths are resolved against the file's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub reference: Option<PathBuf>,
    pub schedule: Option<PathBuf>,
    pub window: Option<usize>,
    pub ert: Option<f64>,
    pub bootstraps: Option<usize>,
    pub seed: Option<u64>,
    pub estimator: Option<EstimatorKind>,
    pub kernel: Option<KernelSpec>,
    pub algorithm: Option<Algorithm>,
    pub min_survivors: Option<usize>,
    pub expectation_samples: Option<usize>,
    pub mode: Option<StartMode>,
    pub max_steps: Option<u64>,
    pub experiment: Option<ExperimentSection>,
}

impl RunConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: RunConfigFile = load_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(q) = p.as_mut() {
                if q.is_relative() {
                    *q = base.join(&*q);
                }
            }
        };
        resolve(&mut cfg.reference);
        resolve(&mut cfg.schedule);
        if let Some(e) = cfg.experiment.as_mut() {
            resolve(&mut e.out);
        }
        Ok(cfg)
    }

    /// Calibration settings from the file, with defaults for anything unset
    /// except the window and expected runtime.
    pub fn calibration(&self) -> Option<CalibrationConfig> {
        let mut c = CalibrationConfig::new(
            self.window?,
            self.ert?,
            self.bootstraps.unwrap_or(DEFAULT_BOOTSTRAPS),
            self.seed.unwrap_or(0),
        );
        c.estimator = self.estimator.unwrap_or(c.estimator);
        c.kernel = self.kernel.unwrap_or(c.kernel);
        c.min_survivors = self.min_survivors.unwrap_or(c.min_survivors);
        c.expectation_samples = self.expectation_samples.unwrap_or(c.expectation_samples);
        Some(c)
    }
}

//! Per-iteration telemetry and its CSV form.
//!
//! Every optimizer emits one [`MetricsRecord`] per iteration plus an initial row
//! at iteration 0. Quantities that need a full pass over the data (training
//! loss, full-gradient norm, test accuracy) are filled in only at cadence
//! points; elsewhere their cells are empty.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::linalg;
use crate::problems::{accuracy_on, Dataset, FiniteSumProblem};

/// Column order of the metrics CSV. Stable.
pub const CSV_HEADER: [&str; 16] = [
    "epoch",
    "iteration",
    "samples",
    "wall_ms",
    "train_loss",
    "grad_norm",
    "test_accuracy",
    "batch_size",
    "sigma",
    "rho",
    "accepted",
    "phase",
    "pflug_sum",
    "lambda_lower",
    "lambda_upper",
    "flushed",
];

/// Index of the wall-clock column, the only non-reproducible one.
pub const WALL_CLOCK_COLUMN: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Transient,
    Stationary,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Transient => "transient",
            Phase::Stationary => "stationary",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub iteration: usize,
    /// Cumulative samples consumed by stochastic gradient evaluations.
    pub samples: u64,
    pub wall_ms: f64,
    pub train_loss: Option<f64>,
    pub grad_norm: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub batch_size: Option<usize>,
    pub sigma: Option<f64>,
    pub rho: Option<f64>,
    pub accepted: Option<bool>,
    pub phase: Option<Phase>,
    pub pflug_sum: Option<f64>,
    pub lambda_lower: Option<f64>,
    pub lambda_upper: Option<f64>,
    pub flushed: Option<bool>,
}

fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn opt<T>(v: Option<T>, f: impl Fn(T) -> String) -> String {
    v.map(f).unwrap_or_default()
}

fn parse_opt<T: std::str::FromStr>(cell: &str) -> std::result::Result<Option<T>, String> {
    if cell.is_empty() {
        Ok(None)
    } else {
        cell.parse().map(Some).map_err(|_| format!("cannot parse {cell:?}"))
    }
}

impl MetricsRecord {
    pub fn to_row(&self) -> Vec<String> {
        vec![
            self.epoch.to_string(),
            self.iteration.to_string(),
            self.samples.to_string(),
            format!("{:.3}", self.wall_ms),
            opt(self.train_loss, fmt_f64),
            opt(self.grad_norm, fmt_f64),
            opt(self.test_accuracy, fmt_f64),
            opt(self.batch_size, |v| v.to_string()),
            opt(self.sigma, fmt_f64),
            opt(self.rho, fmt_f64),
            opt(self.accepted, |v| u8::from(v).to_string()),
            opt(self.phase, |v| v.to_string()),
            opt(self.pflug_sum, fmt_f64),
            opt(self.lambda_lower, fmt_f64),
            opt(self.lambda_upper, fmt_f64),
            opt(self.flushed, |v| u8::from(v).to_string()),
        ]
    }

    pub fn from_row(row: &[&str]) -> std::result::Result<Self, String> {
        if row.len() != CSV_HEADER.len() {
            return Err(format!("expected {} columns, got {}", CSV_HEADER.len(), row.len()));
        }
        let req = |i: usize| -> std::result::Result<&str, String> {
            if row[i].is_empty() {
                Err(format!("column {} is empty", CSV_HEADER[i]))
            } else {
                Ok(row[i])
            }
        };
        let flag = |cell: &str| -> std::result::Result<Option<bool>, String> {
            match cell {
                "" => Ok(None),
                "0" => Ok(Some(false)),
                "1" => Ok(Some(true)),
                other => Err(format!("bad flag {other:?}")),
            }
        };
        let phase = match row[11] {
            "" => None,
            "transient" => Some(Phase::Transient),
            "stationary" => Some(Phase::Stationary),
            other => return Err(format!("bad phase {other:?}")),
        };
        Ok(Self {
            epoch: req(0)?.parse().map_err(|e| format!("epoch: {e}"))?,
            iteration: req(1)?.parse().map_err(|e| format!("iteration: {e}"))?,
            samples: req(2)?.parse().map_err(|e| format!("samples: {e}"))?,
            wall_ms: req(3)?.parse().map_err(|e| format!("wall_ms: {e}"))?,
            train_loss: parse_opt(row[4])?,
            grad_norm: parse_opt(row[5])?,
            test_accuracy: parse_opt(row[6])?,
            batch_size: parse_opt(row[7])?,
            sigma: parse_opt(row[8])?,
            rho: parse_opt(row[9])?,
            accepted: flag(row[10])?,
            phase,
            pflug_sum: parse_opt(row[12])?,
            lambda_lower: parse_opt(row[13])?,
            lambda_upper: parse_opt(row[14])?,
            flushed: flag(row[15])?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    /// The configured number of epochs ran to completion.
    Completed,
    /// A stopping test was met.
    Converged,
    /// The iteration budget ran out before the stopping test was met.
    BudgetExhausted,
    /// The run stopped early; the message says why.
    Aborted(String),
}

/// When the full-pass metrics are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Cadence {
    /// At the end of every epoch.
    #[default]
    Epoch,
    /// Every `k` iterations, plus every epoch end.
    Every(usize),
}

impl Cadence {
    /// `0` means once per epoch.
    pub fn from_count(k: usize) -> Self {
        if k == 0 {
            Cadence::Epoch
        } else {
            Cadence::Every(k)
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub cadence: Cadence,
    pub test_set: Option<Arc<Dataset>>,
}

/// Output of one optimizer run.
#[derive(Debug, Clone)]
pub struct Trace {
    pub algorithm: String,
    pub seed: u64,
    pub records: Vec<MetricsRecord>,
    pub x: Vec<f64>,
    pub status: RunStatus,
}

impl Trace {
    /// Training loss of the last row that carries one.
    pub fn final_loss(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.train_loss)
    }

    pub fn best_loss(&self) -> Option<f64> {
        self.records.iter().filter_map(|r| r.train_loss).reduce(f64::min)
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.test_accuracy)
    }

    pub fn samples(&self) -> u64 {
        self.records.last().map_or(0, |r| r.samples)
    }

    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.iteration)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.records {
            w.write_record(r.to_row())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

/// Reads a metrics CSV back into records.
pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 1,
            msg: "unexpected metrics header".into(),
        });
    }
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let cells: Vec<&str> = rec.iter().collect();
        out.push(MetricsRecord::from_row(&cells).map_err(|msg| Error::Parse {
            path: path.display().to_string(),
            line: k + 2,
            msg,
        })?);
    }
    Ok(out)
}

/// Fills in wall-clock and cadence-point metrics and collects the rows.
pub(crate) struct Recorder<'a> {
    problem: &'a FiniteSumProblem,
    options: &'a RunOptions,
    start: Instant,
    records: Vec<MetricsRecord>,
}

impl<'a> Recorder<'a> {
    pub fn new(problem: &'a FiniteSumProblem, options: &'a RunOptions) -> Self {
        Self {
            problem,
            options,
            start: Instant::now(),
            records: Vec::new(),
        }
    }

    fn due(&self, iteration: usize, epoch_end: bool) -> bool {
        epoch_end
            || iteration == 0
            || matches!(self.options.cadence, Cadence::Every(k) if iteration % k == 0)
    }

    /// Pushes `rec`, computing full-pass metrics at `x` when a cadence point is due.
    pub fn push(&mut self, mut rec: MetricsRecord, x: &[f64], epoch_end: bool) -> Result<()> {
        if self.due(rec.iteration, epoch_end) && linalg::all_finite(x) {
            rec.train_loss = Some(self.problem.full_loss(x)?);
            rec.grad_norm = Some(linalg::norm(&self.problem.full_grad(x)?));
            if let Some(test) = &self.options.test_set {
                rec.test_accuracy = accuracy_on(self.problem.kind(), test, x);
            }
        }
        rec.wall_ms = self.start.elapsed().as_secs_f64() * 1e3;
        self.records.push(rec);
        Ok(())
    }

    pub fn finish(self, algorithm: &str, seed: u64, x: Vec<f64>, status: RunStatus) -> Trace {
        Trace {
            algorithm: algorithm.to_string(),
            seed,
            records: self.records,
            x,
            status,
        }
    }
}

//! Reference optimizers: mini-batch SGD, heavy-ball momentum and SVRG.

use crate::error::{Error, Result};
use crate::linalg;
use crate::metrics::{MetricsRecord, Recorder, RunOptions, RunStatus, Trace};
use crate::problems::FiniteSumProblem;
use crate::sampling::Sampler;
use crate::varchen::{variance_reduced_run, StepSchedule, VarchenParams};

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineParams {
    pub schedule: StepSchedule,
    /// Heavy-ball coefficient in `[0, 1)`; ignored by plain SGD and SVRG.
    pub momentum: f64,
    pub batch: usize,
    pub epochs: usize,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self { schedule: StepSchedule::Constant(0.1), momentum: 0.9, batch: 32, epochs: 10 }
    }
}

impl BaselineParams {
    pub fn violations(&self) -> Vec<String> {
        let mut v = self.schedule.violations();
        if !(0.0..1.0).contains(&self.momentum) {
            v.push(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if self.batch == 0 {
            v.push("batch must be positive".into());
        }
        if self.epochs == 0 {
            v.push("epochs must be positive".into());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(v.join("; ")))
        }
    }
}

struct Loop<'a> {
    sampler: Sampler,
    batch: usize,
    iters_per_epoch: usize,
    rec: Recorder<'a>,
}

fn setup<'a>(
    problem: &'a FiniteSumProblem,
    params: &BaselineParams,
    x0: &[f64],
    seed: u64,
    options: &'a RunOptions,
) -> Result<Loop<'a>> {
    params.validate()?;
    if x0.len() != problem.dim() {
        return Err(Error::DimensionMismatch { expected: problem.dim(), got: x0.len() });
    }
    let n = problem.len();
    let batch = params.batch.min(n);
    let mut rec = Recorder::new(problem, options);
    rec.push(MetricsRecord { batch_size: Some(batch), ..Default::default() }, x0, true)?;
    Ok(Loop {
        sampler: Sampler::new(seed, n, batch, batch)?,
        batch,
        iters_per_epoch: n.div_ceil(batch),
        rec,
    })
}

fn record(rec: &mut Recorder<'_>, k: usize, per_epoch: usize, batch: usize, x: &[f64]) -> Result<()> {
    let epoch_end = k % per_epoch == 0;
    rec.push(
        MetricsRecord {
            epoch: k / per_epoch,
            iteration: k,
            samples: (k * batch) as u64,
            batch_size: Some(batch),
            ..Default::default()
        },
        x,
        epoch_end,
    )
}

/// `x ← x − α_k·g(x, ξ_k)` with a fresh batch each iteration; an epoch is
/// `⌈N/m⌉` iterations.
pub fn sgd_run(
    problem: &FiniteSumProblem,
    params: &BaselineParams,
    x0: Vec<f64>,
    seed: u64,
    options: &RunOptions,
) -> Result<Trace> {
    let mut lp = setup(problem, params, &x0, seed, options)?;
    let mut x = x0;
    let total = lp.iters_per_epoch * params.epochs;
    let mut status = RunStatus::Completed;
    for k in 0..total {
        let batch = lp.sampler.draw_batch(lp.batch)?;
        let g = problem.batch_grad(&batch, &x)?;
        linalg::axpy(-params.schedule.step_size(k), &g, &mut x);
        record(&mut lp.rec, k + 1, lp.iters_per_epoch, lp.batch, &x)?;
        if !linalg::all_finite(&x) {
            status = RunStatus::Aborted(format!("non-finite iterate at iteration {}", k + 1));
            break;
        }
    }
    Ok(lp.rec.finish("sgd", seed, x, status))
}

/// Heavy ball: `v ← μv − α_k·g`, `x ← x + v`, starting from `v = 0`.
pub fn sgd_momentum_run(
    problem: &FiniteSumProblem,
    params: &BaselineParams,
    x0: Vec<f64>,
    seed: u64,
    options: &RunOptions,
) -> Result<Trace> {
    let mut lp = setup(problem, params, &x0, seed, options)?;
    let mut x = x0;
    let mut v = vec![0.0; x.len()];
    let total = lp.iters_per_epoch * params.epochs;
    let mut status = RunStatus::Completed;
    for k in 0..total {
        let batch = lp.sampler.draw_batch(lp.batch)?;
        let g = problem.batch_grad(&batch, &x)?;
        let alpha = params.schedule.step_size(k);
        for ((vi, gi), xi) in v.iter_mut().zip(&g).zip(x.iter_mut()) {
            *vi = params.momentum * *vi - alpha * gi;
            *xi += *vi;
        }
        record(&mut lp.rec, k + 1, lp.iters_per_epoch, lp.batch, &x)?;
        if !linalg::all_finite(&x) {
            status = RunStatus::Aborted(format!("non-finite iterate at iteration {}", k + 1));
            break;
        }
    }
    Ok(lp.rec.finish("sgd-momentum", seed, x, status))
}

/// SVRG: the variance-reduced loop with `H = I`, one anchor per pass over
/// the data.
pub fn svrg_run(
    problem: &FiniteSumProblem,
    params: &BaselineParams,
    x0: Vec<f64>,
    seed: u64,
    options: &RunOptions,
) -> Result<Trace> {
    params.validate()?;
    let vr = VarchenParams {
        memory: 0,
        batch: params.batch,
        schedule: params.schedule,
        epochs: params.epochs,
        ..VarchenParams::default()
    };
    variance_reduced_run(problem, &vr, x0, seed, options, "svrg")
}

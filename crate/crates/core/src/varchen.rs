//! Variance-reduced stochastic damped L-BFGS with controlled Hessian bounds
//! (VARCHEN).
//!
//! Every epoch fixes an anchor point and its full gradient, then walks through
//! a shuffled pass of the data in chunks. Each chunk gives an SVRG-corrected
//! gradient, which is multiplied by the damped L-BFGS operator after the
//! operator's certified spectral bounds have been checked against
//! `[λ_min, λ_max]` and the memory flushed if needed.

use crate::error::{Error, Result};
use crate::lbfgs::LbfgsMemory;
use crate::linalg;
use crate::metrics::{MetricsRecord, Recorder, RunOptions, RunStatus, Trace};
use crate::problems::FiniteSumProblem;
use crate::sampling::Sampler;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    /// `c` for every `k`.
    Constant(f64),
    /// `c/(k+1)`.
    Harmonic(f64),
    /// `a·k^(−β)`, with `k = 0` treated as `k = 1`.
    Power { scale: f64, beta: f64 },
}

impl StepSchedule {
    pub fn step_size(&self, k: usize) -> f64 {
        match *self {
            StepSchedule::Constant(c) => c,
            StepSchedule::Harmonic(c) => c / (k as f64 + 1.0),
            StepSchedule::Power { scale, beta } => scale * (k.max(1) as f64).powf(-beta),
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let scale = match *self {
            StepSchedule::Constant(c) | StepSchedule::Harmonic(c) => c,
            StepSchedule::Power { scale, beta } => {
                if !(0.5 < beta && beta < 1.0) {
                    v.push(format!("power schedule exponent must lie in (0.5, 1), got {beta}"));
                }
                scale
            }
        };
        if !(scale >= 0.0 && scale.is_finite()) {
            v.push(format!("step size scale must be finite and >= 0, got {scale}"));
        }
        v
    }
}

/// Largest `c` for which the harmonic schedule `c/(k+1)` carries the
/// strongly convex convergence guarantee: `λ_min/(L·λ_max)`.
pub fn harmonic_scale_bound(lambda_min: f64, lambda_max: f64, lipschitz: f64) -> f64 {
    lambda_min / (lipschitz * lambda_max)
}

/// Scale `λ_min/(L·λ_max²)` of the power schedule with the nonconvex guarantee.
pub fn power_scale_bound(lambda_min: f64, lambda_max: f64, lipschitz: f64) -> f64 {
    lambda_min / (lipschitz * lambda_max * lambda_max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarchenParams {
    /// Number of stored curvature pairs `p`.
    pub memory: usize,
    /// Damping constant.
    pub eta: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub gamma_under: f64,
    pub gamma_over: f64,
    pub batch: usize,
    pub schedule: StepSchedule,
    pub epochs: usize,
}

impl Default for VarchenParams {
    fn default() -> Self {
        Self {
            memory: 10,
            eta: 0.25,
            lambda_min: 1e-5,
            lambda_max: 1e5,
            gamma_under: 0.1,
            gamma_over: 1e5,
            batch: 32,
            schedule: StepSchedule::Constant(0.1),
            epochs: 10,
        }
    }
}

impl VarchenParams {
    /// The same method with the bound control switched off
    /// (`λ_min = 0`, `λ_max = ∞`).
    pub fn control_disabled(&self) -> Self {
        Self { lambda_min: 0.0, lambda_max: f64::INFINITY, ..self.clone() }
    }

    pub fn control_enabled(&self) -> bool {
        self.lambda_min > 0.0 || self.lambda_max.is_finite()
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(0.0 < self.eta && self.eta < 1.0) {
            v.push(format!("eta must lie in (0, 1), got {}", self.eta));
        }
        // γ_over may equal λ_max: the reference defaults set both to 1e5.
        if !(0.0 <= self.lambda_min
            && self.lambda_min < self.gamma_under
            && self.gamma_under < self.gamma_over
            && self.gamma_over <= self.lambda_max
            && self.gamma_over.is_finite())
        {
            v.push(format!(
                "need 0 <= lambda_min < gamma_under < gamma_over <= lambda_max \
                 (got {}, {}, {}, {})",
                self.lambda_min, self.gamma_under, self.gamma_over, self.lambda_max
            ));
        }
        if self.batch == 0 {
            v.push("batch must be positive".into());
        }
        if self.epochs == 0 {
            v.push("epochs must be positive".into());
        }
        v.extend(self.schedule.violations());
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

/// Per-epoch anchor point and its full gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorState {
    pub x: Vec<f64>,
    pub full_grad: Vec<f64>,
}

impl AnchorState {
    pub fn new(problem: &FiniteSumProblem, x: &[f64]) -> Result<Self> {
        Ok(Self { x: x.to_vec(), full_grad: problem.full_grad(x)? })
    }
}

/// `g(x, ξ) − g(anchor, ξ) + ∇f(anchor)`, returned with `g(x, ξ)`.
///
/// Each coordinate is summed so that both cancellations are exact: at
/// `x = anchor` the result is the anchor's full gradient, and on the full
/// index set it is `∇f(x)`.
pub fn svrg_gradient_parts(
    problem: &FiniteSumProblem,
    batch: &[usize],
    x: &[f64],
    anchor: &AnchorState,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if anchor.x.len() != x.len() {
        return Err(Error::DimensionMismatch { expected: anchor.x.len(), got: x.len() });
    }
    let g_x = problem.batch_grad(batch, x)?;
    let g_a = problem.batch_grad(batch, &anchor.x)?;
    let corrected = (0..x.len())
        .map(|i| {
            let correction = anchor.full_grad[i] - g_a[i];
            if correction == 0.0 {
                g_x[i]
            } else {
                (g_x[i] - g_a[i]) + anchor.full_grad[i]
            }
        })
        .collect();
    Ok((corrected, g_x))
}

pub fn svrg_gradient(problem: &FiniteSumProblem, batch: &[usize], x: &[f64], anchor: &AnchorState) -> Result<Vec<f64>> {
    Ok(svrg_gradient_parts(problem, batch, x, anchor)?.0)
}

/// Runs VARCHEN. With `λ_min = 0` and `λ_max = ∞` this is the uncontrolled
/// stochastic damped L-BFGS with variance reduction; bounds are still
/// computed and recorded. With `memory = 0` it is SVRG.
pub fn varchen_run(
    problem: &FiniteSumProblem,
    params: &VarchenParams,
    x0: Vec<f64>,
    seed: u64,
    options: &RunOptions,
) -> Result<Trace> {
    let name = match (params.memory, params.control_enabled()) {
        (0, _) => "svrg",
        (_, true) => "varchen",
        (_, false) => "sdlbfgs-vr",
    };
    variance_reduced_run(problem, params, x0, seed, options, name)
}

pub(crate) fn variance_reduced_run(
    problem: &FiniteSumProblem,
    params: &VarchenParams,
    x0: Vec<f64>,
    seed: u64,
    options: &RunOptions,
    name: &str,
) -> Result<Trace> {
    params.validate()?;
    if x0.len() != problem.dim() {
        return Err(Error::DimensionMismatch { expected: problem.dim(), got: x0.len() });
    }
    let n = problem.len();
    let batch_size = params.batch.min(n);
    let mut sampler = Sampler::new(seed, n, batch_size, batch_size)?;
    let mut memory = LbfgsMemory::new(params.memory, 1.0, params.gamma_under, params.gamma_over, params.eta)?;
    let track_bounds = params.memory > 0;
    let mut rec = Recorder::new(problem, options);
    let mut x = x0;
    let mut k = 0usize;
    let mut samples = 0u64;
    rec.push(MetricsRecord { batch_size: Some(batch_size), ..Default::default() }, &x, true)?;

    let mut status = RunStatus::Completed;
    'epochs: for epoch in 1..=params.epochs {
        let anchor = AnchorState::new(problem, &x)?;
        samples += n as u64;
        sampler.start_epoch();
        while sampler.remaining() > 0 {
            let batch = sampler.next_chunk(batch_size)?;
            let (g_tilde, g_x) = svrg_gradient_parts(problem, &batch, &x, &anchor)?;
            let (outcome, (lower, upper)) = memory.enforce_bounds(params.lambda_min, params.lambda_max);
            let d = memory.two_loop_apply(&g_tilde);
            let alpha = params.schedule.step_size(k);
            let mut x_new = x.clone();
            linalg::axpy(alpha, &d, &mut x_new);
            k += 1;
            samples += batch.len() as u64;
            if !linalg::all_finite(&x_new) {
                status = RunStatus::Aborted(format!("non-finite iterate at iteration {k}"));
                x = x_new;
                break 'epochs;
            }
            if params.memory > 0 {
                let g_new = problem.batch_grad(&batch, &x_new)?;
                let s = linalg::sub(&x_new, &x);
                let y = linalg::sub(&g_new, &g_x);
                memory.push_pair(&s, &y)?;
            }
            x = x_new;
            let epoch_end = sampler.remaining() == 0;
            rec.push(
                MetricsRecord {
                    epoch: if epoch_end { epoch } else { epoch - 1 },
                    iteration: k,
                    samples,
                    batch_size: Some(batch.len()),
                    lambda_lower: track_bounds.then_some(lower),
                    lambda_upper: track_bounds.then_some(upper),
                    flushed: track_bounds.then_some(outcome.flushed()),
                    ..Default::default()
                },
                &x,
                epoch_end,
            )?;
        }
    }
    Ok(rec.finish(name, seed, x, status))
}

//! Adaptive regularization and sampling (ARAS).
//!
//! The transient phase takes regularized steps `−g/σ` on fixed-size batches,
//! adapting `σ` from a same-batch decrease ratio, and watches Pflug's
//! statistic: the running sum of inner products of successive stochastic
//! gradients. Once that sum turns negative after a burn-in, the run switches
//! to the stationary phase, where `σ` grows harmonically and the batch size is
//! raised whenever the norm test fails.

use crate::error::{Error, Result};
use crate::linalg;
use crate::metrics::{MetricsRecord, Phase, Recorder, RunOptions, RunStatus, Trace};
use crate::problems::FiniteSumProblem;
use crate::sampling::{adaptive_batch_size, norm_test, sample_variance_l1, Sampler};

/// Running sum of successive stochastic-gradient inner products.
#[derive(Debug, Clone, PartialEq)]
pub struct PflugState {
    pub sum: f64,
    /// Number of inner products accumulated.
    pub steps: usize,
    pub burn_in: usize,
}

impl PflugState {
    pub fn new(burn_in: usize) -> Self {
        Self { sum: 0.0, steps: 0, burn_in }
    }

    /// `S ← S + ⟨g_new, g_old⟩`.
    pub fn update(&mut self, g_new: &[f64], g_old: &[f64]) -> Result<()> {
        if g_new.len() != g_old.len() {
            return Err(Error::DimensionMismatch { expected: g_old.len(), got: g_new.len() });
        }
        self.sum += linalg::dot(g_new, g_old);
        self.steps += 1;
        Ok(())
    }

    /// `k > burn_in` and `S < 0`.
    pub fn triggered(&self) -> bool {
        self.steps > self.burn_in && self.sum < 0.0
    }
}

/// `max(σ_min, γ₁σ)` when `ρ̄ ≥ η`, else `γ₂σ`.
pub fn update_sigma_two_branch(sigma: f64, rho: f64, eta: f64, gamma1: f64, gamma2: f64, sigma_min: f64) -> f64 {
    if rho >= eta {
        (gamma1 * sigma).max(sigma_min)
    } else {
        gamma2 * sigma
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArasParams {
    pub sigma0: f64,
    pub sigma_min: f64,
    pub eta: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub batch0: usize,
    pub max_batch: usize,
    /// Iterations before the Pflug trigger is armed.
    pub burn_in: usize,
    pub epochs: usize,
}

impl Default for ArasParams {
    fn default() -> Self {
        Self {
            sigma0: 1.0,
            sigma_min: 1e-3,
            eta: 0.25,
            gamma1: 0.5,
            gamma2: 2.0,
            batch0: 32,
            max_batch: 512,
            burn_in: 20,
            epochs: 10,
        }
    }
}

impl ArasParams {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.sigma_min > 0.0 && self.sigma_min <= self.sigma0 && self.sigma0.is_finite()) {
            v.push(format!(
                "need 0 < sigma_min <= sigma0 (got sigma_min={}, sigma0={})",
                self.sigma_min, self.sigma0
            ));
        }
        if !(0.0 < self.eta && self.eta < 1.0) {
            v.push(format!("eta must lie in (0, 1), got {}", self.eta));
        }
        if !(0.0 < self.gamma1 && self.gamma1 < 1.0 && 1.0 < self.gamma2 && self.gamma2.is_finite()) {
            v.push(format!("need 0 < gamma1 < 1 < gamma2 (got {}, {})", self.gamma1, self.gamma2));
        }
        if !(1 <= self.batch0 && self.batch0 <= self.max_batch) {
            v.push(format!("need 1 <= batch0 <= max_batch (got {}, {})", self.batch0, self.max_batch));
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

#[derive(Debug, Clone)]
pub struct ArasState {
    pub x: Vec<f64>,
    pub sigma: f64,
    pub k: usize,
    /// Stationary-phase counter, starting at 2.
    pub t: usize,
    pub phase: Phase,
    pub pflug: PflugState,
    pub sampler: Sampler,
    pub samples: u64,
}

impl ArasState {
    pub fn new(problem: &FiniteSumProblem, params: &ArasParams, x0: Vec<f64>, seed: u64) -> Result<Self> {
        params.validate()?;
        if x0.len() != problem.dim() {
            return Err(Error::DimensionMismatch { expected: problem.dim(), got: x0.len() });
        }
        let n = problem.len();
        if n < 2 {
            return Err(Error::InvalidParameter("adaptive sampling needs at least 2 samples".into()));
        }
        if params.max_batch > n {
            return Err(Error::InvalidParameter(format!(
                "max_batch ({}) exceeds the number of samples ({n})",
                params.max_batch
            )));
        }
        Ok(Self {
            x: x0,
            sigma: params.sigma0,
            k: 0,
            t: 2,
            phase: Phase::Transient,
            pflug: PflugState::new(params.burn_in),
            sampler: Sampler::new(seed, n, params.batch0, params.max_batch)?,
            samples: 0,
        })
    }
}

/// What one step did, for telemetry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub phase: Phase,
    /// Size of the batch the step was taken on.
    pub batch_size: usize,
    /// `σ` used for the step.
    pub sigma: f64,
    pub rho: Option<f64>,
    /// The stationary-phase norm test failed and the batch was redrawn.
    pub resized: bool,
}

/// One transient-phase iteration. The step is always taken.
pub fn transient_step(state: &mut ArasState, problem: &FiniteSumProblem, params: &ArasParams) -> Result<StepReport> {
    debug_assert_eq!(state.phase, Phase::Transient);
    let m = state.sampler.batch_size();
    let batch = state.sampler.draw_batch(m)?;
    state.samples += m as u64;
    state.k += 1;
    let sigma = state.sigma;
    let g = problem.batch_grad(&batch, &state.x)?;
    let gnorm_sq = linalg::norm_sq(&g);
    let mut report = StepReport { phase: Phase::Transient, batch_size: m, sigma, rho: None, resized: false };
    if gnorm_sq == 0.0 {
        return Ok(report);
    }
    let f_old = problem.batch_loss(&batch, &state.x)?;
    let mut x_new = state.x.clone();
    linalg::axpy(-1.0 / sigma, &g, &mut x_new);
    let f_new = problem.batch_loss(&batch, &x_new)?;
    let g_new = problem.batch_grad(&batch, &x_new)?;
    let rho = (f_old - f_new) * sigma / gnorm_sq;
    state.sigma = update_sigma_two_branch(sigma, rho, params.eta, params.gamma1, params.gamma2, params.sigma_min);
    state.pflug.update(&g_new, &g)?;
    state.x = x_new;
    if state.pflug.triggered() {
        state.phase = Phase::Stationary;
    }
    report.rho = Some(rho);
    Ok(report)
}

/// One stationary-phase iteration: norm test, optional resize and redraw,
/// step `−g/σ`, then `σ ← σ·t/(t−1)`.
pub fn stationary_step(state: &mut ArasState, problem: &FiniteSumProblem, _params: &ArasParams) -> Result<StepReport> {
    debug_assert_eq!(state.phase, Phase::Stationary);
    let sigma = state.sigma;
    let mut m = state.sampler.batch_size().max(2);
    let mut batch = state.sampler.draw_batch(m)?;
    let mut g = problem.batch_grad(&batch, &state.x)?;
    let gnorm_sq = linalg::norm_sq(&g);
    let mut resized = false;
    if gnorm_sq > 0.0 {
        let var = sample_variance_l1(problem, &batch, &state.x, &g)?;
        if !norm_test(var, m, sigma, gnorm_sq) {
            let target = adaptive_batch_size(sigma, var, gnorm_sq, state.sampler.max_batch())?;
            m = target.max(2);
            state.sampler.set_batch_size(m);
            batch = state.sampler.draw_batch(m)?;
            g = problem.batch_grad(&batch, &state.x)?;
            resized = true;
        }
        linalg::axpy(-1.0 / sigma, &g, &mut state.x);
    }
    state.samples += m as u64;
    state.k += 1;
    state.sigma = sigma * state.t as f64 / (state.t - 1) as f64;
    state.t += 1;
    Ok(StepReport { phase: Phase::Stationary, batch_size: m, sigma, rho: None, resized })
}

/// Runs ARAS for `params.epochs` epochs, where an epoch ends once the
/// cumulative sample count reaches the next multiple of `N`.
pub fn aras_run(
    problem: &FiniteSumProblem,
    params: &ArasParams,
    x0: Vec<f64>,
    seed: u64,
    options: &RunOptions,
) -> Result<Trace> {
    let mut state = ArasState::new(problem, params, x0, seed)?;
    let n = problem.len() as u64;
    let mut rec = Recorder::new(problem, options);
    rec.push(
        MetricsRecord {
            batch_size: Some(params.batch0),
            sigma: Some(state.sigma),
            phase: Some(state.phase),
            pflug_sum: Some(0.0),
            ..Default::default()
        },
        &state.x,
        true,
    )?;
    let mut epoch = 0;
    let mut status = RunStatus::Completed;
    while epoch < params.epochs {
        let report = match state.phase {
            Phase::Transient => transient_step(&mut state, problem, params)?,
            Phase::Stationary => stationary_step(&mut state, problem, params)?,
        };
        let epoch_end = state.samples >= (epoch as u64 + 1) * n;
        if epoch_end {
            epoch = (state.samples / n) as usize;
        }
        rec.push(
            MetricsRecord {
                epoch,
                iteration: state.k,
                samples: state.samples,
                batch_size: Some(report.batch_size),
                sigma: Some(report.sigma),
                rho: report.rho,
                phase: Some(report.phase),
                pflug_sum: Some(state.pflug.sum),
                ..Default::default()
            },
            &state.x,
            epoch_end,
        )?;
        if !linalg::all_finite(&state.x) {
            status = RunStatus::Aborted(format!("non-finite iterate at iteration {}", state.k));
            break;
        }
    }
    Ok(rec.finish("aras", seed, state.x, status))
}

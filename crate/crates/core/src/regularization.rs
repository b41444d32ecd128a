//! Adaptive regularization with inexact gradients (ARIG).
//!
//! Each iteration minimizes the regularized first-order model
//! `l(s) = f(x) + gᵀs + ½σ‖s‖²`, whose minimizer is `s = −g/σ`, and adjusts `σ`
//! from the ratio of actual to predicted decrease. The gradient may carry a
//! relative error up to `ω_g = 1/σ`; function values may be inexact too, in
//! which case their tolerance is requested as `η₀` times the model decrease.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg;
use crate::metrics::{MetricsRecord, Recorder, RunOptions, RunStatus, Trace};
use crate::problems::FiniteSumProblem;

#[derive(Debug, Clone, PartialEq)]
pub struct RegParams {
    /// Stopping tolerance `ε` on the gradient norm.
    pub tol: f64,
    pub sigma0: f64,
    pub sigma_min: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    /// Inexact function-value factor, `η₀ < η₁/2`.
    pub eta0: f64,
    pub max_iters: usize,
    /// Consecutive rejected steps tolerated before the run is aborted.
    pub max_rejections: usize,
}

impl Default for RegParams {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            sigma0: 1.0,
            sigma_min: 1e-3,
            eta1: 0.25,
            eta2: 0.75,
            gamma1: 0.5,
            gamma2: 1.5,
            gamma3: 2.0,
            eta0: 0.1,
            max_iters: 100_000,
            max_rejections: 100,
        }
    }
}

impl RegParams {
    /// Every violated constraint, one message each.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.tol > 0.0) {
            v.push(format!("tol must be > 0 (got {})", self.tol));
        }
        if !(self.sigma_min > 0.0 && self.sigma_min <= self.sigma0 && self.sigma0.is_finite()) {
            v.push(format!(
                "need 0 < sigma_min <= sigma0 (got sigma_min={}, sigma0={})",
                self.sigma_min, self.sigma0
            ));
        }
        if !(0.0 < self.eta1 && self.eta1 <= self.eta2 && self.eta2 < 1.0) {
            v.push(format!("need 0 < eta1 <= eta2 < 1 (got eta1={}, eta2={})", self.eta1, self.eta2));
        }
        if !(0.0 < self.gamma1 && self.gamma1 < 1.0 && 1.0 < self.gamma2 && self.gamma2 < self.gamma3) {
            v.push(format!(
                "need 0 < gamma1 < 1 < gamma2 < gamma3 (got {}, {}, {})",
                self.gamma1, self.gamma2, self.gamma3
            ));
        }
        if !(self.eta0 >= 0.0 && self.eta0 < 0.5 * self.eta1) {
            v.push(format!("need 0 <= eta0 < eta1/2 (got eta0={})", self.eta0));
        }
        if self.max_iters == 0 {
            v.push("max_iters must be positive".into());
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

/// Source of approximate gradients honoring `‖g − ∇f(x)‖ ≤ ω‖g‖`.
pub trait GradientOracle {
    fn gradient(&mut self, x: &[f64], omega: f64) -> Result<Vec<f64>>;

    /// Whether answers are exact whatever `ω` is requested, so that a cached
    /// gradient stays valid after `σ` grows.
    fn is_exact(&self) -> bool {
        false
    }
}

/// Source of approximate values honoring `|f̃(x) − f(x)| ≤ ω`.
pub trait ValueOracle {
    fn value(&mut self, x: &[f64], omega: f64) -> Result<f64>;
}

/// Exact full gradient and loss of a finite-sum problem.
pub struct Exact<'a>(pub &'a FiniteSumProblem);

impl GradientOracle for Exact<'_> {
    fn gradient(&mut self, x: &[f64], _omega: f64) -> Result<Vec<f64>> {
        self.0.full_grad(x)
    }

    fn is_exact(&self) -> bool {
        true
    }
}

impl ValueOracle for Exact<'_> {
    fn value(&mut self, x: &[f64], _omega: f64) -> Result<f64> {
        self.0.full_loss(x)
    }
}

/// Returns gradients whose relative error is exactly the requested `ω`.
///
/// With `∇f = G`, the answer is `g = aG + b·w` for a random unit `w ⊥ G`,
/// where `a` is drawn from `[1/(1+ω), 1/(1−ω)]` and `b` solves
/// `(a−1)²‖G‖² + b² = ω²(a²‖G‖² + b²)`. For `ω ≥ 1` (or `n = 1`) the shrunken
/// gradient `G/(1+ω)` is returned, which sits exactly on the error boundary.
pub struct AdversarialGradient<'a> {
    problem: &'a FiniteSumProblem,
    rng: ChaCha8Rng,
}

impl<'a> AdversarialGradient<'a> {
    pub fn new(problem: &'a FiniteSumProblem, seed: u64) -> Self {
        Self { problem, rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl GradientOracle for AdversarialGradient<'_> {
    fn gradient(&mut self, x: &[f64], omega: f64) -> Result<Vec<f64>> {
        let exact = self.problem.full_grad(x)?;
        let gn2 = linalg::norm_sq(&exact);
        if gn2 == 0.0 || omega <= 0.0 {
            return Ok(exact);
        }
        let n = exact.len();
        if omega >= 1.0 || n == 1 {
            let c = if self.rng.random::<bool>() || omega >= 1.0 {
                1.0 / (1.0 + omega)
            } else {
                1.0 / (1.0 - omega)
            };
            return Ok(exact.iter().map(|v| c * v).collect());
        }
        let lo = 1.0 / (1.0 + omega);
        let hi = 1.0 / (1.0 - omega);
        let a = lo + (hi - lo) * self.rng.random::<f64>();
        let b2 = (gn2 * (omega * omega * a * a - (a - 1.0) * (a - 1.0)) / (1.0 - omega * omega)).max(0.0);
        let mut w: Vec<f64> = (0..n).map(|_| self.rng.sample(StandardNormal)).collect();
        let proj = linalg::dot(&w, &exact) / gn2;
        linalg::axpy(-proj, &exact, &mut w);
        let wn = linalg::norm(&w);
        let mut g: Vec<f64> = exact.iter().map(|v| a * v).collect();
        if wn > 0.0 {
            linalg::axpy(b2.sqrt() / wn, &w, &mut g);
        }
        Ok(g)
    }
}

/// Exact loss perturbed by uniform noise in `[−ω, ω]`.
pub struct NoisyValue<'a> {
    problem: &'a FiniteSumProblem,
    rng: ChaCha8Rng,
}

impl<'a> NoisyValue<'a> {
    pub fn new(problem: &'a FiniteSumProblem, seed: u64) -> Self {
        Self { problem, rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl ValueOracle for NoisyValue<'_> {
    fn value(&mut self, x: &[f64], omega: f64) -> Result<f64> {
        let f = self.problem.full_loss(x)?;
        Ok(f + omega * (2.0 * self.rng.random::<f64>() - 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMode {
    Exact,
    InexactGradient,
    InexactGradientAndValue,
}

/// `T̄(0) − T̄(s)` at `s = −g/σ`, i.e. `‖g‖²/σ`.
pub fn model_decrease(sigma: f64, gnorm_sq: f64) -> f64 {
    gnorm_sq / sigma
}

/// Ratio of actual to model-predicted decrease.
pub fn rho_ratio(f_old: f64, f_new: f64, sigma: f64, gnorm_sq: f64) -> Result<f64> {
    if !(gnorm_sq > 0.0) {
        return Err(Error::Degenerate("zero gradient norm in ratio"));
    }
    Ok((f_old - f_new) * sigma / gnorm_sq)
}

/// Three-branch regularization update using the interval endpoints
/// `max(σ_min, γ₁σ)`, `γ₂σ` and `γ₃σ`.
pub fn update_sigma(sigma: f64, rho: f64, params: &RegParams) -> f64 {
    if rho >= params.eta2 {
        (params.gamma1 * sigma).max(params.sigma_min)
    } else if rho >= params.eta1 {
        params.gamma2 * sigma
    } else {
        params.gamma3 * sigma
    }
}

/// Upper bound on every `σₖ` of a run on a problem with `L`-Lipschitz gradient.
pub fn sigma_max_bound(lipschitz: f64, params: &RegParams) -> f64 {
    params.sigma0.max(params.gamma3 * (0.5 * lipschitz + 1.0) / (1.0 - params.eta2))
}

pub fn kappa_s(sigma_max: f64, eta1: f64, sigma_min: f64) -> f64 {
    (1.0 + sigma_max).powi(2) / (eta1 * sigma_min)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexityBudget {
    pub sigma_max: f64,
    pub kappa_s: f64,
    pub max_successful: u64,
    pub max_total: f64,
}

/// Worst-case successful and total iteration counts to reach `‖∇f‖ ≤ ε`.
pub fn complexity_budget(f0: f64, f_low: f64, tol: f64, params: &RegParams, lipschitz: f64) -> Result<ComplexityBudget> {
    if !(f0 >= f_low) {
        return Err(Error::InvalidParameter(format!("need f0 >= f_low (got {f0} < {f_low})")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let sigma_max = sigma_max_bound(lipschitz, params);
    let kappa = kappa_s(sigma_max, params.eta1, params.sigma_min);
    let succ = (kappa * (f0 - f_low) / (tol * tol)).floor();
    let log_g2 = params.gamma2.ln();
    let max_total = succ * (1.0 + params.gamma1.ln().abs() / log_g2) + (sigma_max / params.sigma0).ln() / log_g2;
    Ok(ComplexityBudget {
        sigma_max,
        kappa_s: kappa,
        max_successful: if succ >= u64::MAX as f64 { u64::MAX } else { succ as u64 },
        max_total,
    })
}

/// Inexact values are good enough when `max(ω_f, ω̂_f) ≤ η₀·(T̄(0) − T̄(s))`.
pub fn check_inexact_decrease(omega_f: f64, omega_f_hat: f64, eta0: f64, model_dec: f64) -> Result<bool> {
    if !(model_dec > 0.0) {
        return Err(Error::InvalidParameter(format!("model decrease must be positive, got {model_dec}")));
    }
    Ok(omega_f.max(omega_f_hat) <= eta0 * model_dec)
}

#[derive(Debug, Clone)]
pub struct RegState {
    pub x: Vec<f64>,
    pub sigma: f64,
    pub k: usize,
    pub successful: usize,
    pub very_successful: usize,
    pub rejected: usize,
    /// Gradient oracle queries so far.
    pub gradient_evals: usize,
    consecutive_rejections: usize,
    /// Gradient and its tolerance, kept across rejected steps.
    pending: Option<(Vec<f64>, f64)>,
}

impl RegState {
    pub fn new(x0: Vec<f64>, params: &RegParams) -> Self {
        Self {
            x: x0,
            sigma: params.sigma0,
            k: 0,
            successful: 0,
            very_successful: 0,
            rejected: 0,
            gradient_evals: 0,
            consecutive_rejections: 0,
            pending: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    /// `‖g‖ ≤ ε/(1+ω_g)`; `x` is an approximate first-order critical point.
    Terminated { gnorm: f64 },
    Accepted { rho: f64, sigma: f64 },
    Rejected { rho: f64, sigma: f64 },
}

/// One ARIG iteration.
///
/// After a rejected step the next call retries from the same point with the
/// enlarged `σ`. The gradient is queried again at the tighter tolerance
/// `1/σ`, unless the cached one already meets it (always so for exact oracles).
pub fn arig_step(
    state: &mut RegState,
    params: &RegParams,
    grad: &mut dyn GradientOracle,
    values: &mut dyn ValueOracle,
) -> Result<StepOutcome> {
    let required = 1.0 / state.sigma;
    let cached = state.pending.take().filter(|(_, omega)| grad.is_exact() || *omega <= required);
    let (g, omega_g) = match cached {
        Some(p) => p,
        None => {
            let omega = required;
            let g = grad.gradient(&state.x, omega)?;
            state.gradient_evals += 1;
            if g.len() != state.x.len() {
                return Err(Error::DimensionMismatch { expected: state.x.len(), got: g.len() });
            }
            let gnorm = linalg::norm(&g);
            if gnorm <= params.tol / (1.0 + omega) {
                return Ok(StepOutcome::Terminated { gnorm });
            }
            (g, omega)
        }
    };
    let sigma = state.sigma;
    let gnorm_sq = linalg::norm_sq(&g);
    let model_dec = model_decrease(sigma, gnorm_sq);
    let omega_f = params.eta0 * model_dec;

    let mut trial = state.x.clone();
    linalg::axpy(-1.0 / sigma, &g, &mut trial);
    let f_old = values.value(&state.x, omega_f)?;
    let f_new = values.value(&trial, omega_f)?;
    let rho = rho_ratio(f_old, f_new, sigma, gnorm_sq)?;

    state.sigma = update_sigma(sigma, rho, params);
    state.k += 1;
    if rho >= params.eta1 {
        state.x = trial;
        state.successful += 1;
        if rho >= params.eta2 {
            state.very_successful += 1;
        }
        state.consecutive_rejections = 0;
        Ok(StepOutcome::Accepted { rho, sigma })
    } else {
        state.rejected += 1;
        state.consecutive_rejections += 1;
        if state.consecutive_rejections > params.max_rejections {
            return Err(Error::Oracle(format!(
                "{} consecutive rejected steps at sigma = {:e}",
                state.consecutive_rejections, state.sigma
            )));
        }
        state.pending = Some((g, omega_g));
        Ok(StepOutcome::Rejected { rho, sigma })
    }
}

/// Runs ARIG from `x0` until termination or `max_iters` iterations.
///
/// One row per iteration: `sigma` is the value used by the step, `rho` its
/// ratio and `accepted` the outcome. `samples` counts gradient evaluations in
/// units of `N`.
pub fn arig_run(
    problem: &FiniteSumProblem,
    params: &RegParams,
    mode: OracleMode,
    x0: Vec<f64>,
    seed: u64,
    options: &RunOptions,
) -> Result<Trace> {
    params.validate()?;
    if x0.len() != problem.dim() {
        return Err(Error::DimensionMismatch { expected: problem.dim(), got: x0.len() });
    }
    let mut exact = Exact(problem);
    let mut exact_v = Exact(problem);
    let mut adv = AdversarialGradient::new(problem, seed);
    let mut noisy = NoisyValue::new(problem, seed ^ 0x9E37_79B9_7F4A_7C15);
    let (grad, values): (&mut dyn GradientOracle, &mut dyn ValueOracle) = match mode {
        OracleMode::Exact => (&mut exact, &mut exact_v),
        OracleMode::InexactGradient => (&mut adv, &mut exact_v),
        OracleMode::InexactGradientAndValue => (&mut adv, &mut noisy),
    };

    let n = problem.len() as u64;
    let mut rec = Recorder::new(problem, options);
    let mut state = RegState::new(x0, params);
    rec.push(
        MetricsRecord { sigma: Some(state.sigma), ..Default::default() },
        &state.x,
        true,
    )?;
    let mut status = RunStatus::BudgetExhausted;
    while state.k < params.max_iters {
        let outcome = match arig_step(&mut state, params, grad, values) {
            Ok(o) => o,
            Err(Error::Oracle(msg)) => {
                status = RunStatus::Aborted(msg);
                break;
            }
            Err(e) => return Err(e),
        };
        let (rho, sigma, accepted) = match outcome {
            StepOutcome::Terminated { .. } => {
                status = RunStatus::Converged;
                break;
            }
            StepOutcome::Accepted { rho, sigma } => (rho, sigma, true),
            StepOutcome::Rejected { rho, sigma } => (rho, sigma, false),
        };
        rec.push(
            MetricsRecord {
                epoch: state.k,
                iteration: state.k,
                samples: state.gradient_evals as u64 * n,
                sigma: Some(sigma),
                rho: Some(rho),
                accepted: Some(accepted),
                ..Default::default()
            },
            &state.x,
            true,
        )?;
    }
    Ok(rec.finish("arig", seed, state.x, status))
}

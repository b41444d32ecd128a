//! Damped limited-memory BFGS: curvature-pair storage, Powell-style damping,
//! the scaling clamp, two-loop products and certified spectral bounds.
//!
//! The initial operator is `H⁰ = γ̃⁻¹I` (so `B⁰ = γ̃I`), with
//! `γ̃ = clamp(yᵀy/sᵀy, γ_under, γ_over)` refreshed from every pushed pair.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::linalg;

/// One stored update, with the scaling that was in force when it was pushed.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvaturePair {
    pub s: Vec<f64>,
    /// Raw gradient difference.
    pub y: Vec<f64>,
    /// Damped gradient difference.
    pub y_hat: Vec<f64>,
    /// `1/(sᵀŷ)`.
    pub rho_hat: f64,
    pub theta: f64,
    pub scaling: f64,
}

/// Damping coefficient: `1` when `sᵀy ≥ η·sᵀB⁰s`, otherwise
/// `(1−η)·sᵀB⁰s / (sᵀB⁰s − sᵀy)`.
pub fn damping_theta(s_dot_y: f64, s_b0_s: f64, eta: f64) -> Result<f64> {
    if !(s_b0_s > 0.0) {
        return Err(Error::InvalidParameter(format!("sᵀB⁰s must be positive, got {s_b0_s}")));
    }
    if s_dot_y >= eta * s_b0_s {
        Ok(1.0)
    } else {
        Ok((1.0 - eta) * s_b0_s / (s_b0_s - s_dot_y))
    }
}

fn blend(theta: f64, y: &[f64], s: &[f64], scaling: f64) -> Vec<f64> {
    y.iter().zip(s).map(|(yi, si)| theta * yi + (1.0 - theta) * scaling * si).collect()
}

/// `ŷ = θy + (1−θ)γ̃s`, returned with `θ`.
///
/// The returned pair always passes `sᵀŷ ≥ η·γ̃‖s‖²` as evaluated in floating
/// point: if rounding leaves the exact-arithmetic `θ` a hair short, `θ` is
/// nudged towards zero, where `ŷ = γ̃s` satisfies the inequality with room.
pub fn damped_y(y: &[f64], s: &[f64], scaling: f64, eta: f64) -> Result<(Vec<f64>, f64)> {
    if y.len() != s.len() {
        return Err(Error::DimensionMismatch { expected: s.len(), got: y.len() });
    }
    let ss = linalg::norm_sq(s);
    if ss == 0.0 {
        return Err(Error::Degenerate("zero step in curvature pair"));
    }
    let sbs = scaling * ss;
    let threshold = eta * sbs;
    let mut theta = damping_theta(linalg::dot(s, y), sbs, eta)?;
    let mut y_hat = blend(theta, y, s, scaling);
    let mut tries = 0;
    while linalg::dot(s, &y_hat) < threshold {
        tries += 1;
        theta = if tries > 60 { 0.0 } else { theta * (1.0 - 1e-12 * f64::from(1u32 << tries.min(30))) };
        y_hat = blend(theta, y, s, scaling);
        if theta == 0.0 {
            break;
        }
    }
    Ok((y_hat, theta))
}

/// `clamp(yᵀy/sᵀy, γ_under, γ_over)`, or `γ_over` when `sᵀy ≤ 0`.
pub fn update_scaling(s: &[f64], y: &[f64], gamma_under: f64, gamma_over: f64) -> f64 {
    let sy = linalg::dot(s, y);
    let raw = if sy > 0.0 { linalg::norm_sq(y) / sy } else { gamma_over };
    if raw.is_nan() {
        gamma_over
    } else {
        raw.clamp(gamma_under, gamma_over)
    }
}

/// `‖y‖/‖s‖`, a local estimate of the gradient's Lipschitz constant.
pub fn estimate_lg(s: &[f64], y: &[f64]) -> Result<f64> {
    let sn = linalg::norm(s);
    if sn == 0.0 {
        return Err(Error::Degenerate("zero step in Lipschitz estimate"));
    }
    Ok(linalg::norm(y) / sn)
}

/// Spectral bounds of `A = μV̂V̂ᵀ + ρ̂ssᵀ` for a single pair with
/// `sᵀŷ ≥ γ‖s‖²` and `‖ŷ‖ ≤ L_y‖s‖`.
pub fn single_pair_bounds(mu: f64, gamma: f64, l_y: f64) -> (f64, f64) {
    bound_step(mu, mu, gamma, l_y)
}

/// One step of the bound recursion: given `λ ≤ eig(H) ≤ Λ`, bounds the
/// spectrum of `V̂ᵀHV̂ + ρ̂ssᵀ`.
fn bound_step(lower: f64, upper: f64, gamma: f64, l_y: f64) -> (f64, f64) {
    let l2 = l_y * l_y;
    let new_lower = (1.0 / l_y).min(lower / (1.0 + (lower / gamma) * l2));
    let new_upper = 1.0 / gamma + (upper * l2 / (gamma * gamma) - lower / (1.0 + (upper / gamma) * l2)).max(0.0);
    (new_lower, new_upper)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PushOutcome {
    Stored,
    /// Zero step, or a memory of capacity 0: nothing changed.
    Skipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlushOutcome {
    /// Bounds were within limits.
    Kept,
    /// Only the newest pair was retained.
    KeptNewest,
    /// Even the newest pair alone violated the limits; the memory was emptied.
    Cleared,
}

impl FlushOutcome {
    pub fn flushed(self) -> bool {
        self != FlushOutcome::Kept
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsMemory {
    capacity: usize,
    pairs: VecDeque<CurvaturePair>,
    scaling: f64,
    gamma_under: f64,
    gamma_over: f64,
    eta: f64,
}

impl LbfgsMemory {
    /// Empty memory with `H⁰ = γ̃₀⁻¹I`.
    pub fn new(capacity: usize, initial_scaling: f64, gamma_under: f64, gamma_over: f64, eta: f64) -> Result<Self> {
        let mut errs = Vec::new();
        if !(0.0 < gamma_under && gamma_under <= gamma_over && gamma_over.is_finite()) {
            errs.push(format!("need 0 < gamma_under <= gamma_over < inf (got {gamma_under}, {gamma_over})"));
        }
        if !(0.0 < eta && eta < 1.0) {
            errs.push(format!("damping eta must lie in (0, 1), got {eta}"));
        }
        if !(initial_scaling > 0.0 && initial_scaling.is_finite()) {
            errs.push(format!("initial scaling must be positive, got {initial_scaling}"));
        }
        if !errs.is_empty() {
            return Err(Error::InvalidParameter(errs.join("; ")));
        }
        Ok(Self {
            capacity,
            pairs: VecDeque::with_capacity(capacity),
            scaling: initial_scaling,
            gamma_under,
            gamma_over,
            eta,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Current `γ̃`; `H⁰ = γ̃⁻¹I`.
    pub fn scaling(&self) -> f64 {
        self.scaling
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Stored pairs, oldest first.
    pub fn pairs(&self) -> impl ExactSizeIterator<Item = &CurvaturePair> {
        self.pairs.iter()
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
    }

    /// Refreshes the scaling from `(s, y)`, damps `y` against the new `B⁰`
    /// and stores the pair, evicting the oldest one when full.
    pub fn push_pair(&mut self, s: &[f64], y: &[f64]) -> Result<PushOutcome> {
        if s.len() != y.len() {
            return Err(Error::DimensionMismatch { expected: s.len(), got: y.len() });
        }
        if !linalg::all_finite(s) || !linalg::all_finite(y) {
            return Err(Error::NonFinite("curvature pair"));
        }
        if self.capacity == 0 || linalg::norm_sq(s) == 0.0 {
            return Ok(PushOutcome::Skipped);
        }
        self.scaling = update_scaling(s, y, self.gamma_under, self.gamma_over);
        let (y_hat, theta) = damped_y(y, s, self.scaling, self.eta)?;
        let sy_hat = linalg::dot(s, &y_hat);
        debug_assert!(sy_hat >= self.eta * (self.scaling * linalg::norm_sq(s)));
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back(CurvaturePair {
            s: s.to_vec(),
            y: y.to_vec(),
            y_hat,
            rho_hat: 1.0 / sy_hat,
            theta,
            scaling: self.scaling,
        });
        Ok(PushOutcome::Stored)
    }

    /// `d = −H·g` by the two-loop recursion.
    pub fn two_loop_apply(&self, g: &[f64]) -> Vec<f64> {
        let mut q = g.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for p in self.pairs.iter().rev() {
            let a = p.rho_hat * linalg::dot(&p.s, &q);
            linalg::axpy(-a, &p.y_hat, &mut q);
            alphas.push(a);
        }
        linalg::scale(1.0 / self.scaling, &mut q);
        for (p, a) in self.pairs.iter().zip(alphas.into_iter().rev()) {
            let b = p.rho_hat * linalg::dot(&p.y_hat, &q);
            linalg::axpy(a - b, &p.s, &mut q);
        }
        linalg::scale(-1.0, &mut q);
        q
    }

    /// Largest `‖y‖/‖s‖` over the stored pairs (0 for an empty memory).
    pub fn lg_estimate(&self) -> f64 {
        self.pairs
            .iter()
            .map(|p| linalg::norm(&p.y) / linalg::norm(&p.s))
            .fold(0.0, f64::max)
    }

    /// Certified `(λ, Λ)` with `λ ≤ eig(H) ≤ Λ`, valid whenever `lg_est`
    /// bounds every stored `‖y‖/‖s‖`.
    ///
    /// Starts from `eig(H⁰) = γ̃⁻¹` and applies the single-pair bound once per
    /// pair, oldest to newest, with that pair's curvature constant `η·γ̃ⱼ` and
    /// `‖ŷ‖/‖s‖ ≤ lg_est + γ̃ⱼ`.
    pub fn hessian_bounds(&self, lg_est: f64) -> (f64, f64) {
        let h0 = 1.0 / self.scaling;
        self.pairs.iter().fold((h0, h0), |(lo, hi), p| {
            bound_step(lo, hi, self.eta * p.scaling, lg_est + p.scaling)
        })
    }

    /// Keeps the bounds inside `[λ_min, λ_max]`.
    ///
    /// On violation only the newest pair is retained; if that pair alone
    /// still violates the limits, the memory is emptied so that `H = H⁰`.
    /// Returns the outcome and the bounds of the resulting operator.
    pub fn enforce_bounds(&mut self, lambda_min: f64, lambda_max: f64) -> (FlushOutcome, (f64, f64)) {
        let within = |(lo, hi): (f64, f64)| lo >= lambda_min && hi <= lambda_max;
        let bounds = self.hessian_bounds(self.lg_estimate());
        if self.pairs.is_empty() || within(bounds) {
            return (FlushOutcome::Kept, bounds);
        }
        while self.pairs.len() > 1 {
            self.pairs.pop_front();
        }
        let bounds = self.hessian_bounds(self.lg_estimate());
        if within(bounds) {
            return (FlushOutcome::KeptNewest, bounds);
        }
        self.pairs.clear();
        (FlushOutcome::Cleared, self.hessian_bounds(0.0))
    }
}

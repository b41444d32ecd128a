//! Mini-batch drawing, sample-variance estimation and the norm test that drives
//! adaptive batch sizes.
//!
//! The random stream is ChaCha8 seeded from a `u64`: a counter-based generator
//! whose output depends only on the seed and the number of values consumed.

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::problems::FiniteSumProblem;

/// Seeded batch sampler over a population of `N` indices.
///
/// Keeps the current batch size `m` with `1 ≤ m ≤ m_max ≤ N`.
#[derive(Debug, Clone)]
pub struct Sampler {
    rng: ChaCha8Rng,
    population: usize,
    batch_size: usize,
    max_batch: usize,
    perm: Vec<usize>,
    cursor: usize,
}

impl Sampler {
    pub fn new(seed: u64, population: usize, batch_size: usize, max_batch: usize) -> Result<Self> {
        if population == 0 {
            return Err(Error::InvalidParameter("population must be positive".into()));
        }
        if !(1 <= batch_size && batch_size <= max_batch && max_batch <= population) {
            return Err(Error::InvalidParameter(format!(
                "batch sizes must satisfy 1 <= m ({batch_size}) <= m_max ({max_batch}) <= N ({population})"
            )));
        }
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            population,
            batch_size,
            max_batch,
            perm: (0..population).collect(),
            cursor: population,
        })
    }

    pub fn population(&self) -> usize {
        self.population
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn max_batch(&self) -> usize {
        self.max_batch
    }

    /// Sets the current batch size, clamped to `[1, m_max]`.
    pub fn set_batch_size(&mut self, m: usize) {
        self.batch_size = m.clamp(1, self.max_batch);
    }

    /// `m` distinct indices drawn uniformly without replacement, returned in
    /// ascending order.
    pub fn draw_batch(&mut self, m: usize) -> Result<Vec<usize>> {
        if m == 0 {
            return Err(Error::EmptyBatch);
        }
        if m > self.population {
            return Err(Error::InvalidParameter(format!(
                "batch size {m} exceeds population {}",
                self.population
            )));
        }
        let mut batch = index::sample(&mut self.rng, self.population, m).into_vec();
        batch.sort_unstable();
        Ok(batch)
    }

    /// Reshuffles the epoch permutation and rewinds its cursor.
    pub fn start_epoch(&mut self) {
        self.perm.shuffle(&mut self.rng);
        self.cursor = 0;
    }

    /// Samples left in the current epoch permutation.
    pub fn remaining(&self) -> usize {
        self.population - self.cursor
    }

    /// Next `min(m, remaining)` indices of the epoch permutation, ascending.
    pub fn next_chunk(&mut self, m: usize) -> Result<Vec<usize>> {
        if m == 0 {
            return Err(Error::EmptyBatch);
        }
        let take = m.min(self.remaining());
        if take == 0 {
            return Err(Error::InvalidParameter("epoch permutation exhausted".into()));
        }
        let mut batch = self.perm[self.cursor..self.cursor + take].to_vec();
        self.cursor += take;
        batch.sort_unstable();
        Ok(batch)
    }
}

/// `‖V̂‖₁` with `V̂ = (1/(m−1)) Σᵢ (∇fᵢ(x) − g)²` (elementwise square), where `g`
/// is the batch-mean gradient.
pub fn sample_variance_l1(problem: &FiniteSumProblem, batch: &[usize], x: &[f64], g: &[f64]) -> Result<f64> {
    if batch.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "sample variance needs at least 2 samples, got {}",
            batch.len()
        )));
    }
    if g.len() != problem.dim() {
        return Err(Error::DimensionMismatch { expected: problem.dim(), got: g.len() });
    }
    let mut acc = 0.0;
    for &i in batch {
        let gi = problem.eval_grad_i(i, x)?;
        acc += gi.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(acc / (batch.len() - 1) as f64)
}

/// `‖V̂‖₁ / m ≤ ‖g‖² / σ²`
pub fn norm_test(var_l1: f64, m: usize, sigma: f64, gnorm_sq: f64) -> bool {
    var_l1 / m as f64 <= gnorm_sq / (sigma * sigma)
}

/// `min(⌈σ²‖V̂‖₁ / ‖g‖²⌉, m_max)`, at least 1.
///
/// When floating-point rounding would leave the uncapped size one short of
/// passing [`norm_test`] on the same statistics, the size is bumped until it does.
pub fn adaptive_batch_size(sigma: f64, var_l1: f64, gnorm_sq: f64, max_batch: usize) -> Result<usize> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    if !(gnorm_sq > 0.0) {
        return Err(Error::Degenerate("zero gradient norm"));
    }
    if !(var_l1 >= 0.0) {
        return Err(Error::InvalidParameter(format!("variance must be >= 0, got {var_l1}")));
    }
    let cap = max_batch.max(1);
    let ratio = (sigma * sigma * var_l1 / gnorm_sq).ceil();
    if !(ratio < cap as f64) {
        return Ok(cap);
    }
    let mut m = (ratio as usize).max(1);
    while m < cap && !norm_test(var_l1, m, sigma, gnorm_sq) {
        m += 1;
    }
    Ok(m)
}

//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use stochopt::lbfgs::LbfgsMemory;
use stochopt::{Dataset, FiniteSumProblem};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Inverse-Hessian approximation built densely, oldest pair first:
/// `H ← (I − ρ̂sŷᵀ) H (I − ρ̂ŷsᵀ) + ρ̂ssᵀ`, starting from `H⁰ = γ̃⁻¹I`.
pub fn dense_inverse_hessian(memory: &LbfgsMemory, n: usize) -> DMatrix<f64> {
    let mut h = DMatrix::identity(n, n) / memory.scaling();
    for p in memory.pairs() {
        let s = DVector::from_column_slice(&p.s);
        let y = DVector::from_column_slice(&p.y_hat);
        let rho = 1.0 / s.dot(&y);
        let v = DMatrix::identity(n, n) - rho * &y * s.transpose();
        h = v.transpose() * h * v + rho * &s * s.transpose();
    }
    h
}

pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let sym = (a + a.transpose()) * 0.5;
    sym.symmetric_eigenvalues().iter().copied().collect()
}

/// Pairs with a mix of positive and non-positive curvature and varied scales.
pub fn random_memory(rng: &mut ChaCha8Rng, n: usize, capacity: usize, pushes: usize) -> LbfgsMemory {
    let mut mem = LbfgsMemory::new(capacity, 1.0, 1e-2, 1e3, 0.25).unwrap();
    for _ in 0..pushes {
        let s = gaussian(rng, n);
        let scale = 10f64.powf(rng.random_range(-1.0..1.0));
        let y: Vec<f64> = if rng.random_bool(0.7) {
            // y = M s for a random symmetric positive definite M
            let m = random_spd(rng, n, scale);
            (&m * DVector::from_column_slice(&s)).iter().copied().collect()
        } else {
            gaussian(rng, n).iter().map(|v| scale * v).collect()
        };
        mem.push_pair(&s, &y).unwrap();
    }
    mem
}

pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    (&g * g.transpose()) * (scale / n as f64) + DMatrix::identity(n, n) * (0.05 * scale)
}

/// Central finite difference of `f` at `x`.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|j| {
            xp[j] = x[j] + h;
            let up = f(&xp);
            xp[j] = x[j] - h;
            let down = f(&xp);
            xp[j] = x[j];
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    diff / scale.max(1e-300)
}

pub fn random_dataset(rng: &mut ChaCha8Rng, samples: usize, dim: usize) -> Dataset {
    let rows = (0..samples).map(|_| gaussian(rng, dim)).collect();
    let labels = (0..samples).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
    Dataset::from_dense_rows(rows, labels).unwrap()
}

/// `½xᵀAx − bᵀx` and its minimum value `−½bᵀA⁻¹b`.
pub fn random_quadratic(rng: &mut ChaCha8Rng, n: usize) -> (FiniteSumProblem, DMatrix<f64>, Vec<f64>, f64) {
    let a = random_spd(rng, n, 1.0);
    let b = gaussian(rng, n);
    let bv = DVector::from_column_slice(&b);
    let sol = a.clone().cholesky().unwrap().solve(&bv);
    let f_low = -0.5 * bv.dot(&sol);
    (FiniteSumProblem::make_quadratic(&a, &b).unwrap(), a, b, f_low)
}

mod common;

use nalgebra::DVector;
use proptest::prelude::*;
use stochopt::lbfgs::{estimate_lg, single_pair_bounds, FlushOutcome, LbfgsMemory};
use stochopt::linalg;

use common::*;

fn vec_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, n)
}

proptest! {
    #[test]
    fn stored_pairs_satisfy_curvature_condition(
        pairs in prop::collection::vec((vec_strategy(4), vec_strategy(4)), 1..12),
        eta in 0.05..0.95f64,
    ) {
        let mut mem = LbfgsMemory::new(3, 1.0, 1e-2, 1e2, eta).unwrap();
        for (s, y) in &pairs {
            mem.push_pair(s, y).unwrap();
            prop_assert!(mem.len() <= 3);
            for p in mem.pairs() {
                prop_assert!(linalg::dot(&p.s, &p.y_hat) >= eta * (p.scaling * linalg::norm_sq(&p.s)));
                prop_assert!(p.rho_hat > 0.0);
                prop_assert!(p.theta > 0.0 || p.theta == 0.0 && p.y_hat.iter().zip(&p.s).all(|(a, b)| *a == p.scaling * b));
            }
            prop_assert!((1e-2..=1e2).contains(&mem.scaling()));
        }
    }

    #[test]
    fn two_loop_direction_is_descent(seed in 0u64..500, pushes in 0usize..8) {
        let mut rng = rng(seed);
        let mem = random_memory(&mut rng, 5, 4, pushes);
        let g = gaussian(&mut rng, 5);
        let d = mem.two_loop_apply(&g);
        prop_assert!(linalg::dot(&g, &d) < 0.0);
    }

    #[test]
    fn enforcement_contract(seed in 0u64..500, lambda_max in 1.0..1e4f64) {
        let mut rng = rng(seed);
        let mut mem = random_memory(&mut rng, 4, 5, 7);
        let before = mem.len();
        let lambda_min = 1e-4;
        let (outcome, (lo, hi)) = mem.enforce_bounds(lambda_min, lambda_max);
        match outcome {
            FlushOutcome::Kept => prop_assert_eq!(mem.len(), before),
            FlushOutcome::KeptNewest => prop_assert_eq!(mem.len(), 1),
            FlushOutcome::Cleared => prop_assert_eq!(mem.len(), 0),
        }
        if outcome != FlushOutcome::Cleared {
            prop_assert!(lo >= lambda_min && hi <= lambda_max);
        }
        prop_assert_eq!((lo, hi), mem.hessian_bounds(mem.lg_estimate()));
    }

    #[test]
    fn single_pair_lower_bound_is_positive(mu in 1e-6..1e6f64, gamma in 1e-6..1e6f64, l_y in 1e-6..1e6f64) {
        let (lo, hi) = single_pair_bounds(mu, gamma, l_y);
        prop_assert!(lo > 0.0 && lo <= hi);
    }
}

#[test]
fn ring_semantics_drop_oldest() {
    let mut mem = LbfgsMemory::new(2, 1.0, 0.1, 10.0, 0.25).unwrap();
    for k in 1..=3 {
        mem.push_pair(&[k as f64, 0.0], &[k as f64, 0.0]).unwrap();
    }
    let firsts: Vec<f64> = mem.pairs().map(|p| p.s[0]).collect();
    assert_eq!(firsts, vec![2.0, 3.0]);
}

#[test]
fn lipschitz_estimate_is_a_rayleigh_bound() {
    let mut rng = rng(21);
    for _ in 0..200 {
        let a = random_spd(&mut rng, 6, 3.0);
        let lambda_max = sym_eigenvalues(&a).into_iter().fold(0.0, f64::max);
        let s = gaussian(&mut rng, 6);
        let y: Vec<f64> = (&a * DVector::from_column_slice(&s)).iter().copied().collect();
        assert!(estimate_lg(&s, &y).unwrap() <= lambda_max * (1.0 + 1e-12));
    }
}

#[test]
fn collinear_single_pair_lies_in_closed_form_interval() {
    // s = y, μ = 1, γ = 1: the update has eigenvalue ρ‖s‖² = 1 along s
    let (lo, hi) = single_pair_bounds(1.0, 1.0, 1.0);
    assert_eq!((lo, hi), (0.5, 1.5));
    let mut mem = LbfgsMemory::new(1, 1.0, 0.1, 10.0, 0.25).unwrap();
    mem.push_pair(&[0.6, 0.8], &[0.6, 0.8]).unwrap();
    for e in sym_eigenvalues(&dense_inverse_hessian(&mem, 2)) {
        assert!((lo..=hi).contains(&e));
    }
}

#[test]
fn dense_bounds_hold_for_long_histories() {
    let mut rng = rng(22);
    for _ in 0..100 {
        let mem = random_memory(&mut rng, 5, 4, 12);
        let (lo, hi) = mem.hessian_bounds(mem.lg_estimate());
        for e in sym_eigenvalues(&dense_inverse_hessian(&mem, 5)) {
            assert!(e >= lo * (1.0 - 1e-9) && e <= hi * (1.0 + 1e-9), "{lo} <= {e} <= {hi}");
        }
    }
}

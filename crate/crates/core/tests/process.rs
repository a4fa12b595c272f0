mod common;

use equiterm::equilibrium::{solve_equilibrium, EquilibriumOptions, Status};
use equiterm::model::{estimate_covariance, TradingGrid};
use equiterm::process::{doob_decompose, shift_measure, verify_covariance_invariance, PathEnsemble};
use equiterm::Market64;
use num_rational::BigRational;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid() -> TradingGrid {
    TradingGrid::new(vec![1.0, 2.0], vec![vec![0.5, 1.0], vec![0.5, 1.5, 2.0]], 0.0)
}

/// Deterministic drift with `A(t0) = 0` on every delivery.
fn random_drift(rng: &mut ChaCha8Rng, grid: &TradingGrid, n_paths: usize) -> Vec<Vec<f64>> {
    let of = grid.delivery_of_slot();
    let table: Vec<f64> =
        (0..grid.n_slots()).map(|s| if s == grid.offset(of[s]) { 0.0 } else { rng.gen_range(-50.0..50.0) }).collect();
    vec![table; n_paths]
}

#[test]
fn decomposition_is_exact_on_rational_trees() {
    let g = grid();
    for seed in 0..10 {
        let e: PathEnsemble<BigRational> = common::random_tree(seed, &g, 2, seed % 2 == 0).cast();
        for normalize in [false, true] {
            let d = doob_decompose(&e, &g, 2, normalize).unwrap();
            let c = d.check(&e, &g, 2).unwrap();
            assert_eq!(c.max(), 0.0, "seed {seed}: {c:?}");
        }
    }
}

#[test]
fn original_drift_leaves_the_ensemble_unchanged() {
    let g = grid();
    let e: PathEnsemble<BigRational> = common::random_tree(4, &g, 2, false).cast();
    let d = doob_decompose(&e, &g, 2, false).unwrap();
    assert_eq!(shift_measure(&e, &g, 2, &d.predictable).unwrap(), e);
}

#[test]
fn zero_drift_leaves_a_martingale() {
    let g = grid();
    let e: PathEnsemble<BigRational> = common::random_tree(5, &g, 2, false).cast();
    let zero = vec![vec![BigRational::zero(); g.n_slots()]; e.len()];
    let m = shift_measure(&e, &g, 2, &zero).unwrap();
    let d = doob_decompose(&m, &g, 2, false).unwrap();
    assert!(d.predictable.iter().flatten().all(|a| a.is_zero()));
}

#[test]
fn decomposing_a_shift_recovers_its_drift() {
    let g = grid();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seed in 0..5 {
        let e: PathEnsemble<BigRational> = common::random_tree(seed, &g, 2, false).cast();
        let drift: Vec<Vec<BigRational>> = random_drift(&mut rng, &g, e.len())
            .iter()
            .map(|row| row.iter().map(|x| BigRational::from_float(*x).unwrap()).collect())
            .collect();
        let shifted = shift_measure(&e, &g, 2, &drift).unwrap();
        assert_eq!(doob_decompose(&shifted, &g, 2, false).unwrap().predictable, drift);
    }
}

#[test]
fn level_shift_keeps_the_covariance() {
    let g = grid();
    let e = common::random_tree(6, &g, 2, false);
    let d = doob_decompose(&e, &g, 2, false).unwrap();
    let up: Vec<Vec<f64>> = d.predictable.iter().map(|row| row.iter().map(|a| a + 10.0).collect()).collect();
    let same = verify_covariance_invariance(&e, &shift_measure(&e, &g, 2, &d.predictable).unwrap(), &g, 2).unwrap();
    assert_eq!(same.max_deviation, 0.0);
    let moved = verify_covariance_invariance(&e, &shift_measure(&e, &g, 2, &up).unwrap(), &g, 2).unwrap();
    assert!(moved.holds(1e-12), "{moved:?}");
}

#[test]
fn admissible_drifts_keep_the_covariance() {
    let g = grid();
    let e = common::random_tree(7, &g, 2, false);
    let zero = vec![vec![0.0; g.n_slots()]; e.len()];
    let base = shift_measure(&e, &g, 2, &zero).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let drift = random_drift(&mut rng, &g, e.len());
        let rep = verify_covariance_invariance(&base, &shift_measure(&e, &g, 2, &drift).unwrap(), &g, 2).unwrap();
        assert!(rep.holds(1e-12), "{rep:?}");
    }
}

#[test]
fn equilibrium_prices_are_a_fixed_point_of_the_shift() {
    let mut s = common::two_slot();
    let e = (0..)
        .map(|seed| common::random_tree(seed, &s.grid, 1, true))
        .find(|e| estimate_covariance(e, &s.grid, 1).is_ok())
        .unwrap();
    s.exogenous.covariance = None;
    s.exogenous.ensemble = Some(e.clone());
    let market = Market64::new(&s).unwrap();
    let res = solve_equilibrium(&market, &EquilibriumOptions::default()).unwrap();
    assert_eq!(res.status, Status::Converged);

    let d = doob_decompose(&e, &s.grid, 1, false).unwrap();
    let shifted = shift_measure(&e, &s.grid, 1, &d.drift_to(&e, &res.undiscounted_prices)).unwrap();
    for (k, target) in res.undiscounted_prices.iter().enumerate() {
        assert!((shifted.mean_of(|p| shifted.paths[p].pi[k]) - target).abs() < 1e-9);
    }
    let before = estimate_covariance(&e, &s.grid, 1).unwrap();
    let after = estimate_covariance(&shifted, &s.grid, 1).unwrap();
    assert!((&before.matrix - &after.matrix).amax() <= 1e-12);

    s.exogenous.ensemble = Some(shifted);
    let again = Market64::new(&s).unwrap();
    let opts = EquilibriumOptions { initial_prices: Some(res.prices.clone()), ..Default::default() };
    let res2 = solve_equilibrium(&again, &opts).unwrap();
    assert_eq!(res2.status, Status::Converged);
    assert!(res2.newton_steps <= 2);
}

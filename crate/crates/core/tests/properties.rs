mod common;

use std::collections::BTreeSet;

use equiterm::equilibrium::excess_volume;
use equiterm::linalg::{max_eigenvalue, symmetrize};
use equiterm::model::{assemble_all, canonical_index, PlayerKind, Scenario, Var};
use equiterm::process::{doob_decompose, shift_measure, verify_covariance_invariance};
use equiterm::qp::{response_jacobian, solve_qp, QpOptions};
use equiterm::Market64;
use nalgebra::DVector;
use proptest::prelude::*;

fn prices(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.0..80.0f64, n)
}

fn seed_and_prices() -> impl Strategy<Value = (u64, Vec<f64>, Vec<f64>)> {
    (0u64..40).prop_flat_map(|seed| {
        let n = common::random_scenario(seed).grid.n_slots();
        (Just(seed), prices(n), prices(n))
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

    #[test]
    fn canonical_index_is_a_bijection(seed in 0u64..200) {
        let s = common::random_scenario(seed);
        for producer in &s.producers {
            let lay = canonical_index(&s.grid, &s.fuels, producer);
            let mut seen = BTreeSet::new();
            for j in 0..s.grid.n_deliveries() {
                for i in 0..s.grid.trading_times[j].len() {
                    seen.insert(lay.position(Var::V { j, i }));
                    seen.insert(lay.position(Var::O { j, i }));
                    for l in 0..s.n_fuels() {
                        seen.insert(lay.position(Var::F { j, i, l }));
                    }
                }
                for r in 0..lay.n_plants() {
                    seen.insert(lay.position(Var::W { j, r }));
                }
            }
            prop_assert_eq!(seen.len(), lay.dim());
            prop_assert_eq!(seen.iter().next_back().copied(), Some(lay.dim() - 1));
        }
    }

    #[test]
    fn scenario_json_round_trips(seed in 0u64..200) {
        let s = common::random_scenario(seed);
        prop_assert_eq!(Scenario::from_json(&s.to_json()).unwrap(), s);
    }

    #[test]
    fn utility_is_concave((seed, x, y) in seed_and_prices(), theta in 0.01..0.99f64) {
        let (_, players) = assemble_all(&common::random_scenario(seed)).unwrap();
        let opts = QpOptions::default();
        for p in &players {
            let a = solve_qp(p, &x, None, &opts).unwrap().v;
            let b = solve_qp(p, &y, None, &opts).unwrap().v;
            let mid = &a * theta + &b * (1.0 - theta);
            let lhs = p.utility(&mid, &x);
            let rhs = theta * p.utility(&a, &x) + (1.0 - theta) * p.utility(&b, &x);
            prop_assert!(lhs >= rhs - 1e-12 * (1.0 + rhs.abs()), "{} {lhs} {rhs}", p.name);
        }
    }

    #[test]
    fn best_response_beats_other_feasible_points((seed, x, y) in seed_and_prices()) {
        let (_, players) = assemble_all(&common::random_scenario(seed)).unwrap();
        let opts = QpOptions::default();
        for p in &players {
            let best = solve_qp(p, &x, None, &opts).unwrap();
            let other = solve_qp(p, &y, None, &opts).unwrap().v;
            let tol = 1e-9 * (1.0 + best.utility.abs());
            prop_assert!(best.utility >= p.utility(&other, &x) - tol);
            prop_assert!(best.utility >= p.utility(&p.start, &x) - tol);
        }
    }

    #[test]
    fn response_jacobians_are_negative_semidefinite((seed, x, _) in seed_and_prices()) {
        let (_, players) = assemble_all(&common::random_scenario(seed)).unwrap();
        for p in &players {
            let sol = solve_qp(p, &x, None, &QpOptions::default()).unwrap();
            let jac = response_jacobian(p, &sol).matrix;
            prop_assert!(max_eigenvalue(&symmetrize(&jac)) <= 1e-9, "{}", p.name);
        }
    }

    #[test]
    fn responses_are_affine_within_an_active_set((seed, x, y) in seed_and_prices(), t in 0.1..0.9f64) {
        let (_, players) = assemble_all(&common::random_scenario(seed)).unwrap();
        let opts = QpOptions::default();
        let at = |s: f64| -> Vec<f64> { x.iter().zip(&y).map(|(a, b)| a + s * (b - a)).collect() };
        let h = 1e-3;
        for p in &players {
            let sols: Vec<_> = [t - h, t, t + h].iter().map(|&s| solve_qp(p, &at(s), None, &opts).unwrap()).collect();
            if sols.iter().any(|s| s.active_set != sols[0].active_set || s.on_boundary) {
                continue;
            }
            let n = p.n_slots;
            let second = sols[0].volumes(n) - sols[1].volumes(n) * 2.0 + sols[2].volumes(n);
            prop_assert!(second.amax() <= 1e-9, "{} {}", p.name, second.amax());
        }
    }

    #[test]
    fn excess_volume_is_monotone((seed, x, y) in seed_and_prices()) {
        let market = Market64::new(&common::random_scenario(seed)).unwrap();
        let opts = QpOptions::default();
        let zx = excess_volume(&market, &x, &opts).unwrap();
        let zy = excess_volume(&market, &y, &opts).unwrap();
        let d = DVector::from_iterator(x.len(), x.iter().zip(&y).map(|(a, b)| a - b));
        let scale = 1.0 + d.amax() * (zx.amax() + zy.amax());
        prop_assert!((zx - zy).dot(&d) <= 1e-9 * scale);
    }

    #[test]
    fn consumers_meet_their_demand_share((seed, x, _) in seed_and_prices()) {
        let s = common::random_scenario(seed);
        let (_, players) = assemble_all(&s).unwrap();
        for p in players.iter().filter(|p| p.kind == PlayerKind::Consumer) {
            let v = solve_qp(p, &x, None, &QpOptions::default()).unwrap().volumes(p.n_slots);
            let sums = p.delivery_sums() * v;
            prop_assert!((sums - &p.b_eq).amax() <= 1e-9);
        }
    }

    #[test]
    fn doob_parts_reconstruct_the_paths(seed in 0u64..500, normalize in any::<bool>()) {
        let grid = equiterm::model::TradingGrid::new(vec![1.0, 2.0], vec![vec![0.5, 1.0], vec![0.5, 1.5, 2.0]], 0.0);
        let e = common::random_tree(seed, &grid, 1, false);
        let parts = doob_decompose(&e, &grid, 1, normalize).unwrap();
        let check = parts.check(&e, &grid, 1).unwrap();
        prop_assert!(check.max() <= 1e-12, "{:?}", check);
    }

    #[test]
    fn level_shifts_keep_the_covariance(seed in 0u64..500, level in -50.0..50.0f64) {
        let grid = equiterm::model::TradingGrid::new(vec![1.0, 2.0], vec![vec![0.5, 1.0], vec![0.5, 1.5, 2.0]], 0.0);
        let e = common::random_tree(seed, &grid, 1, false);
        let raw = doob_decompose(&e, &grid, 1, false).unwrap();
        let zero = shift_measure(&e, &grid, 1, &vec![vec![0.0; grid.n_slots()]; e.paths.len()]).unwrap();
        let drift = raw.drift_to(&e, &vec![level; grid.n_slots()]);
        let moved = shift_measure(&e, &grid, 1, &drift).unwrap();
        let inv = verify_covariance_invariance(&zero, &moved, &grid, 1).unwrap();
        prop_assert!(inv.holds(1e-12), "{:?}", inv);
    }
}

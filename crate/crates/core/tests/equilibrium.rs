mod common;

use equiterm::equilibrium::{
    check_uniqueness, detect_saturation, excess_volume, solve_equilibrium, DeliveryStatus, EquilibriumOptions, Method,
    Status, StepKind, UniquenessOptions,
};
use equiterm::model::validate_scenario;
use equiterm::qp::QpOptions;
use equiterm::Market64;

fn delivery_sum(z: &nalgebra::DVector<f64>) -> f64 {
    z.iter().sum()
}

#[test]
fn desk_price_matches_closed_form() {
    let market = Market64::new(&common::desk()).unwrap();
    let res = solve_equilibrium(&market, &EquilibriumOptions::default()).unwrap();
    assert_eq!(res.status, Status::Converged);
    assert!((res.prices[0] - common::desk_price()).abs() < 1e-9, "{} vs {}", res.prices[0], common::desk_price());
    assert!(res.clearing_residual <= 1e-8);
    assert!(res.kkt_residual <= 1e-8);
    assert!(!res.bound_contacts.any());
}

#[test]
fn all_methods_agree_on_the_desk() {
    let market = Market64::new(&common::two_slot()).unwrap();
    let mut prices = Vec::new();
    for method in [Method::Hybrid, Method::Newton, Method::Tatonnement] {
        let opts = EquilibriumOptions { method, max_iter: 2000, ..Default::default() };
        let res = solve_equilibrium(&market, &opts).unwrap();
        assert_eq!(res.status, Status::Converged, "{method}");
        prices.push(res.prices);
    }
    for p in &prices[1..] {
        for (a, b) in p.iter().zip(&prices[0]) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }
}

#[test]
fn excess_volume_at_extreme_prices() {
    let market = Market64::new(&common::desk()).unwrap();
    let eps = 1e-3;
    let low = excess_volume(&market, &[-1000.0 + eps], &QpOptions::default()).unwrap();
    assert!((delivery_sum(&low) - 5.0).abs() < 1e-9);
    let high = excess_volume(&market, &[1000.0 - eps], &QpOptions::default()).unwrap();
    assert!((delivery_sum(&high) + 5.0).abs() < 1e-9);
}

#[test]
fn saturation_flags_and_signs() {
    let market = Market64::new(&common::desk()).unwrap();
    let qp = QpOptions::default();
    let up = detect_saturation(&market, &[1000.0 - 1e-3], &qp).unwrap();
    assert_eq!(up.deliveries[0].status, DeliveryStatus::AllUpper);
    assert!(up.deliveries[0].clearing_sum < 0.0 && up.consistent());
    let down = detect_saturation(&market, &[-1000.0 + 1e-3], &qp).unwrap();
    assert_eq!(down.deliveries[0].status, DeliveryStatus::AllLower);
    assert!(down.deliveries[0].clearing_sum > 0.0 && down.consistent());

    let res = solve_equilibrium(&market, &EquilibriumOptions::default()).unwrap();
    let at = detect_saturation(&market, &res.prices, &qp).unwrap();
    assert_eq!(at.deliveries[0].status, DeliveryStatus::Interior);
}

#[test]
fn demand_near_capacity_saturates_every_delivery_at_high_prices() {
    let mut s = common::random_scenario(3);
    let cap = s.total_capacity();
    for d in &mut s.exogenous.demand {
        *d = 0.99 * cap;
    }
    let market = Market64::new(&s).unwrap();
    let prices = vec![999.0; market.n_slots()];
    let rep = detect_saturation(&market, &prices, &QpOptions::default()).unwrap();
    assert!(rep.deliveries.iter().all(|d| d.status == DeliveryStatus::AllUpper && d.clearing_sum < 0.0));
}

#[test]
fn random_corpus_converges() {
    for seed in 0..20 {
        let scenario = common::random_scenario(seed);
        let report = validate_scenario(&scenario, &Default::default());
        assert!(report.passed, "seed {seed}: {:?}", report.failures().collect::<Vec<_>>());
        let market = Market64::new(&scenario).unwrap();
        let res = solve_equilibrium(&market, &EquilibriumOptions::default()).unwrap();
        assert_eq!(res.status, Status::Converged, "seed {seed}");
        assert!(res.clearing_residual <= 1e-8 && res.kkt_residual <= 1e-8);
        assert!(!res.bound_contacts.any(), "seed {seed}");
        let objective: f64 = res.market_objective.abs();
        let l1: f64 = res.prices.iter().map(|p| p.abs()).sum();
        assert!(objective <= res.clearing_residual * l1 + 1e-12);
    }
}

#[test]
fn hybrid_residual_never_increases_after_warmup() {
    for seed in 0..10 {
        let market = Market64::new(&common::random_scenario(seed)).unwrap();
        let res = solve_equilibrium(&market, &EquilibriumOptions::default()).unwrap();
        for w in res.trace.windows(2) {
            if w[1].kind == StepKind::Newton {
                assert!(w[1].residual <= w[0].residual, "seed {seed}");
            }
        }
    }
}

#[test]
fn common_risk_aversion_scaling_still_clears() {
    for seed in [1, 4, 9] {
        let mut s = common::random_scenario(seed);
        for p in &mut s.producers {
            p.risk_aversion *= 3.0;
        }
        for c in &mut s.consumers {
            c.risk_aversion *= 3.0;
        }
        let res = solve_equilibrium(&Market64::new(&s).unwrap(), &EquilibriumOptions::default()).unwrap();
        assert_eq!(res.status, Status::Converged);
    }
}

#[test]
fn restart_at_the_solution_needs_no_steps() {
    let market = Market64::new(&common::random_scenario(5)).unwrap();
    let res = solve_equilibrium(&market, &EquilibriumOptions::default()).unwrap();
    let opts = EquilibriumOptions { initial_prices: Some(res.prices.clone()), ..Default::default() };
    let again = solve_equilibrium(&market, &opts).unwrap();
    assert_eq!(again.status, Status::Converged);
    assert_eq!(again.iterations, 0);
}

#[test]
fn wrong_initial_length_is_an_error() {
    let market = Market64::new(&common::desk()).unwrap();
    let opts = EquilibriumOptions { initial_prices: Some(vec![1.0, 2.0]), ..Default::default() };
    assert!(solve_equilibrium(&market, &opts).is_err());
}

#[test]
fn iteration_cap_is_reported() {
    let market = Market64::new(&common::random_scenario(14)).unwrap();
    let opts = EquilibriumOptions { max_iter: 1, ..Default::default() };
    let res = solve_equilibrium(&market, &opts).unwrap();
    assert_eq!(res.status, Status::MaxIterations);
    assert!(!res.converged());
}

#[test]
fn thread_count_does_not_change_the_answer() {
    let market = Market64::new(&common::random_scenario(17)).unwrap();
    let one = solve_equilibrium(&market, &EquilibriumOptions { threads: Some(1), ..Default::default() }).unwrap();
    let four = solve_equilibrium(&market, &EquilibriumOptions { threads: Some(4), ..Default::default() }).unwrap();
    assert_eq!(one.prices, four.prices);
    assert_eq!(one.iterations, four.iterations);
}

#[test]
fn uniqueness_holds_with_an_interior_plant() {
    let market = Market64::new(&common::two_slot()).unwrap();
    let res = solve_equilibrium(&market, &EquilibriumOptions::default()).unwrap();
    let opts = UniquenessOptions { samples: 200, ..Default::default() };
    let rep = check_uniqueness(&market, &res.prices, &opts).unwrap();
    assert_eq!(rep.rank, 1);
    assert!(rep.rank_condition && rep.strict_condition);
    assert!(rep.jacobian_eigen_max.unwrap() < 0.0);
    assert!(rep.monotone && rep.monotonicity_samples.iter().all(|s| s.inner < 0.0));
    assert_eq!(rep.strictly_feasible_plant_per_delivery, vec![true]);
    assert!(rep.unique());
}

#[test]
fn consumer_only_market_fails_the_strict_condition() {
    let mut s = common::two_slot();
    s.producers.clear();
    let market = Market64::new(&s).unwrap();
    let opts = UniquenessOptions { samples: 50, ..Default::default() };
    let rep = check_uniqueness(&market, &[0.0, 0.0], &opts).unwrap();
    assert_eq!(rep.rank, 0);
    assert!(!rep.rank_condition && !rep.strict_condition);
    assert!(rep.jacobian_eigen_max.unwrap().abs() < 1e-12);
    assert!(!rep.unique());
}

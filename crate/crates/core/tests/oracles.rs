mod common;

use common::*;
use dsm_core::model::{self, grid_cost};
use dsm_core::oracle::{
    best_response, fairness_comparison, nash_best_response_from, nash_best_response_iteration,
    social_welfare_optimum,
};
use dsm_core::{fixed_point_residual, ConsumerSpec, PriceCurve, Scenario};
use rand::Rng;

/// Cost of consumer n written out directly from the price law.
fn bill(q: &[f64], others: &[f64], curve: &PriceCurve) -> f64 {
    (0..q.len())
        .map(|h| {
            let load = q[h] + others[h];
            (curve.a()[h] * load.powf(curve.b()[h]) + curve.c()[h]) * q[h]
        })
        .sum()
}

/// Argmin over 10^4 evenly spaced points of the budget segment (H = 2).
fn grid_best_response(others: &[f64], spec: &ConsumerSpec, curve: &PriceCurve) -> Vec<f64> {
    let lo = spec.q_min[0].max(spec.energy - spec.q_max[1]);
    let hi = spec.q_max[0].min(spec.energy - spec.q_min[1]);
    let mut best = (f64::INFINITY, vec![lo, spec.energy - lo]);
    for i in 0..=10_000 {
        let x = lo + (hi - lo) * i as f64 / 10_000.0;
        let q = vec![x, spec.energy - x];
        let c = bill(&q, others, curve);
        if c < best.0 {
            best = (c, q);
        }
    }
    best.1
}

#[test]
fn best_response_matches_grid_argmin() {
    let mut r = rng(10);
    for _ in 0..50 {
        let curve = PriceCurve::new(
            vec![r.gen_range(0.1..2.0), r.gen_range(0.1..2.0)],
            vec![r.gen_range(1.0..3.0), r.gen_range(1.0..3.0)],
            vec![r.gen_range(0.0..1.0), r.gen_range(0.0..1.0)],
        )
        .unwrap();
        let lo = vec![r.gen_range(0.0..1.0), r.gen_range(0.0..1.0)];
        let hi: Vec<f64> = lo.iter().map(|l| l + r.gen_range(0.5..3.0)).collect();
        let e = lo[0] + lo[1] + r.gen_range(0.1..0.9) * (hi[0] - lo[0] + hi[1] - lo[1]);
        let spec = ConsumerSpec::new(lo, hi, e).unwrap();
        let others = vec![r.gen_range(0.0..5.0), r.gen_range(0.0..5.0)];
        let q = best_response(&others, &spec, &curve, 1e-9).unwrap();
        let g = grid_best_response(&others, &spec, &curve);
        assert!(linf(std::slice::from_ref(&q), std::slice::from_ref(&g)) <= 1e-3, "{q:?} vs grid {g:?}");
        assert!(bill(&q, &others, &curve) <= bill(&g, &others, &curve) + 1e-12);
    }
}

#[test]
fn best_response_rejects_invalid_input() {
    let curve = PriceCurve::uniform(2, 1.0, 1.2, 0.0).unwrap();
    let spec = ConsumerSpec::new(vec![0.0, 0.0], vec![2.0, 2.0], 1.0).unwrap();
    assert!(best_response(&[-1.0, 0.0], &spec, &curve, 1e-9).is_err());
    assert!(best_response(&[0.0], &spec, &curve, 1e-9).is_err());
    let bad = ConsumerSpec {
        q_min: vec![0.0, 0.0],
        q_max: vec![1.0, 1.0],
        energy: 5.0,
    };
    assert!(best_response(&[0.0, 0.0], &bad, &curve, 1e-9).is_err());
}

#[test]
fn nash_oracle_is_start_independent() {
    for seed in [0, 4, 11] {
        let (scenario, _) = toy_game(seed);
        let reference = nash_best_response_iteration(&scenario, 1e-9, 10_000).unwrap();
        assert!(reference.residual <= 1e-8, "residual {}", reference.residual);
        let mut r = rng(20 + seed);
        for _ in 0..10 {
            let start = scenario.sample_profiles(&mut r).unwrap();
            let other = nash_best_response_from(&scenario, start, 1e-9, 10_000).unwrap();
            assert!(linf(&other.profiles, &reference.profiles) <= 1e-4);
        }
    }
}

#[test]
fn nash_oracle_refusals() {
    let (scenario, _) = toy_game(0);
    assert!(nash_best_response_iteration(&scenario, 1e-9, 1).is_err());
    let steep = Scenario::new(
        scenario.specs().to_vec(),
        PriceCurve::uniform(scenario.horizon(), 1.0, 8.0, 0.0).unwrap(),
    )
    .unwrap();
    assert!(!steep.uniqueness_verified());
    assert!(nash_best_response_iteration(&steep, 1e-9, 100).is_err());
}

#[test]
fn welfare_dominates_equilibrium_on_toy_games() {
    for seed in 0..20 {
        let (scenario, _) = toy_game(seed);
        let ne = nash_best_response_iteration(&scenario, 1e-9, 10_000).unwrap();
        let opt = social_welfare_optimum(&scenario, 1e-10, 100_000).unwrap();
        let ne_cost = grid_cost(&model::aggregate(&ne.profiles), scenario.curve()).unwrap();
        assert!(opt.total_cost <= ne_cost + 1e-12, "seed {seed}");
        let mut r = rng(seed);
        for _ in 0..20 {
            let q = scenario.sample_profiles(&mut r).unwrap();
            let c = grid_cost(&model::aggregate(&q), scenario.curve()).unwrap();
            assert!(opt.total_cost <= c + 1e-12);
        }
    }
}

#[test]
fn welfare_single_consumer_is_best_response_to_nobody() {
    let curve = PriceCurve::new(vec![0.5, 1.0, 2.0], vec![1.2, 1.5, 2.0], vec![0.0, 0.1, 0.0]).unwrap();
    let spec = ConsumerSpec::new(vec![0.0, 0.2, 0.0], vec![3.0, 3.0, 3.0], 4.0).unwrap();
    let scenario = Scenario::new(vec![spec.clone()], curve.clone()).unwrap();
    let opt = social_welfare_optimum(&scenario, 1e-11, 100_000).unwrap();
    let br = best_response(&[0.0; 3], &spec, &curve, 1e-11).unwrap();
    assert!(linf(&opt.profiles, &[br]) <= 1e-6);
}

#[test]
fn fairness_rows_for_identical_consumers_agree() {
    let curve = PriceCurve::uniform(3, 0.5, 1.2, 0.0).unwrap();
    let spec = ConsumerSpec::new(vec![0.0; 3], vec![4.0; 3], 6.0).unwrap();
    let scenario = Scenario::new(vec![spec.clone(), spec], curve).unwrap();
    let q = vec![vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]];
    let rows = fairness_comparison(&q, &scenario).unwrap();
    assert_eq!(rows[0].bill_instantaneous, rows[1].bill_instantaneous);
    assert_eq!(rows[0].bill_total_load, rows[1].bill_total_load);
    assert!((rows[0].bill_instantaneous - rows[0].bill_total_load).abs() < 1e-12);
    assert!((rows[0].par - 1.5).abs() < 1e-15);
}

#[test]
fn oracle_residual_is_small_relative_to_tolerance() {
    for seed in 0..20 {
        let (scenario, _) = toy_game(seed);
        let tol = 1e-8;
        let r = nash_best_response_iteration(&scenario, tol, 10_000).unwrap();
        assert!(r.residual <= 10.0 * tol, "seed {seed}: {}", r.residual);
        assert!((fixed_point_residual(&r.profiles, &scenario, 1.0) - r.residual).abs() < 1e-15);
    }
}

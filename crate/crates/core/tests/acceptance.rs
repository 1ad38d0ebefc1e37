//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use common::*;
use dsm_core::algorithms::{GossipConfig, RunConfig, RunTrace};
use dsm_core::model::{self, bill_instantaneous, bill_total_load, grid_cost, rank_two_eigenvalues, slot_jacobian};
use dsm_core::oracle::{nash_best_response_iteration, social_welfare_optimum};
use dsm_core::{ConsumerSpec, PriceCurve, Scenario};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// ---------------------------------------------------------------- 1

fn own_bill(q_n: &[f64], others: &[f64], curve: &PriceCurve) -> f64 {
    q_n.iter()
        .zip(others)
        .enumerate()
        .map(|(h, (x, o))| {
            let load = x + o;
            (curve.a()[h] * load.powf(curve.b()[h]) + curve.c()[h]) * x
        })
        .sum()
}

fn criterion_1() -> Outcome {
    let mut r = rng(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = r.gen_range(1..=10);
        let h = r.gen_range(1..=24);
        let a: Vec<f64> = (0..h).map(|_| r.gen_range(0.001..1.0)).collect();
        let b: Vec<f64> = (0..h).map(|_| r.gen_range(1.0..3.0)).collect();
        let c: Vec<f64> = (0..h).map(|_| r.gen_range(0.0..1.0)).collect();
        let curve = PriceCurve::new(a, b, c).unwrap();
        let q_n: Vec<f64> = (0..h).map(|_| r.gen_range(0.1..3.0)).collect();
        let others: Vec<f64> = (0..h).map(|_| (n - 1) as f64 * r.gen_range(0.0..3.0)).collect();
        let q_sigma: Vec<f64> = q_n.iter().zip(&others).map(|(x, o)| x + o).collect();
        let analytic = model::mapping_component(&q_n, &q_sigma, &curve).unwrap();
        for k in 0..h {
            let step = 1e-5 * q_n[k].max(1.0);
            let mut up = q_n.clone();
            let mut down = q_n.clone();
            up[k] += step;
            down[k] -= step;
            let fd = (own_bill(&up, &others, &curve) - own_bill(&down, &others, &curve)) / (2.0 * step);
            worst = worst.max((fd - analytic[k]).abs() / analytic[k].abs().max(1e-12));
        }
    }
    check(worst <= 1e-6, format!("max relative error vs central differences {worst:.2e} (tol 1e-6)"))
}

// ---------------------------------------------------------------- 2

/// Euclidean projection by enumerating every lower/upper/free pattern.
fn qp_projection(spec: &ConsumerSpec, v: &[f64]) -> Vec<f64> {
    let h = v.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for code in 0..3usize.pow(h as u32) {
        let mut pattern = vec![0u8; h];
        let mut c = code;
        for p in pattern.iter_mut() {
            *p = (c % 3) as u8;
            c /= 3;
        }
        let mut x = vec![0.0; h];
        let mut fixed = 0.0;
        let mut free_sum = 0.0;
        let mut free = 0usize;
        for i in 0..h {
            match pattern[i] {
                0 => {
                    x[i] = spec.q_min[i];
                    fixed += x[i];
                }
                1 => {
                    x[i] = spec.q_max[i];
                    fixed += x[i];
                }
                _ => {
                    free += 1;
                    free_sum += v[i];
                }
            }
        }
        if free == 0 {
            if (fixed - spec.energy).abs() > 1e-12 * (1.0 + spec.energy) {
                continue;
            }
        } else {
            let lambda = (free_sum - (spec.energy - fixed)) / free as f64;
            for i in 0..h {
                if pattern[i] == 2 {
                    x[i] = v[i] - lambda;
                }
            }
        }
        let slack = 1e-12;
        if (0..h).any(|i| x[i] < spec.q_min[i] - slack || x[i] > spec.q_max[i] + slack) {
            continue;
        }
        let dist: f64 = x.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.as_ref().is_none_or(|(d, _)| dist < *d) {
            best = Some((dist, x));
        }
    }
    best.expect("feasible set is nonempty").1
}

fn random_spec<R: Rng>(r: &mut R, h: usize) -> ConsumerSpec {
    let lo: Vec<f64> = (0..h).map(|_| r.gen_range(0.0..2.0)).collect();
    let hi: Vec<f64> = lo.iter().map(|l| l + r.gen_range(0.0..3.0)).collect();
    let (smin, smax): (f64, f64) = (lo.iter().sum(), hi.iter().sum());
    let e = (smin + r.gen_range(0.0..=1.0) * (smax - smin)).max(1e-3);
    ConsumerSpec::new(lo, hi, e).unwrap()
}

fn criterion_2() -> Outcome {
    let mut r = rng(2);
    let mut worst_qp = 0.0f64;
    for _ in 0..500 {
        let h = r.gen_range(1..=4);
        let spec = random_spec(&mut r, h);
        let v: Vec<f64> = (0..h).map(|_| r.gen_range(-5.0..8.0)).collect();
        let p = spec.project(&v).unwrap();
        let o = qp_projection(&spec, &v);
        worst_qp = worst_qp.max(linf(&[p], &[o]));
    }
    let mut worst_idem = 0.0f64;
    let mut worst_expand = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let h = r.gen_range(1..=24);
        let spec = random_spec(&mut r, h);
        let x: Vec<f64> = (0..h).map(|_| r.gen_range(-5.0..8.0)).collect();
        let y: Vec<f64> = (0..h).map(|_| r.gen_range(-5.0..8.0)).collect();
        let px = spec.project(&x).unwrap();
        let py = spec.project(&y).unwrap();
        let ppx = spec.project(&px).unwrap();
        worst_idem = worst_idem.max(linf(&[ppx], std::slice::from_ref(&px)));
        let dp: f64 = px.iter().zip(&py).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let dx: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        worst_expand = worst_expand.max(dp - dx);
    }
    check(
        worst_qp <= 1e-8 && worst_idem <= 1e-12 && worst_expand <= 1e-12,
        format!(
            "QP oracle L-inf {worst_qp:.2e} (tol 1e-8); idempotence {worst_idem:.2e}; max(|Px-Py| - |x-y|) {worst_expand:.2e}"
        ),
    )
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Outcome {
    let mut r = rng(3);
    let mut min_eig = f64::INFINITY;
    let mut worst_closed = 0.0f64;
    let mut worst_jacobian = 0.0f64;
    for _ in 0..200 {
        let n = r.gen_range(2..=10);
        let bound = 3.0 + 4.0 / (n as f64 - 1.0);
        let b = r.gen_range(1.0..bound);
        let a = r.gen_range(0.001..1.0);
        let loads: Vec<f64> = (0..n).map(|_| r.gen_range(0.01..5.0)).collect();
        let total: f64 = loads.iter().sum();
        let sigma = a * b * total.powf(b - 2.0);
        let g = DMatrix::from_fn(n, n, |i, j| {
            let base = if i == j { 2.0 * total } else { total };
            sigma * (base + (b - 1.0) * loads[i])
        });
        let curve = PriceCurve::uniform(1, a, b, 0.0).unwrap();
        let lib = slot_jacobian(&loads, 0, &curve).unwrap();
        worst_jacobian = worst_jacobian.max((&lib - &g).amax());
        let eig = SymmetricEigen::new(&g + g.transpose());
        min_eig = min_eig.min(eig.eigenvalues.min() / sigma);

        let z: Vec<f64> = loads.iter().map(|l| total + (b - 1.0) * l).collect();
        let t = DMatrix::from_fn(n, n, |i, j| z[i] + z[j]);
        let mut numeric: Vec<f64> = SymmetricEigen::new(t).eigenvalues.iter().copied().collect();
        numeric.sort_by(f64::total_cmp);
        let (hi, lo) = rank_two_eigenvalues(&loads, b);
        worst_closed = worst_closed
            .max((hi - numeric[n - 1]).abs())
            .max((lo - numeric[0]).abs());
    }
    check(
        min_eig > 0.0 && worst_closed <= 1e-9 && worst_jacobian <= 1e-12,
        format!(
            "min eigenvalue of (G+G^T)/sigma {min_eig:.3e} (> 0); closed-form rank-2 eigenvalues off by {worst_closed:.2e} (tol 1e-9)"
        ),
    )
}

// ---------------------------------------------------------------- 4

struct ToyRuns {
    traces: Vec<RunTrace>,
    worst: [f64; 3],
    oracle_residual: f64,
}

fn toy_runs(seed: u64) -> ToyRuns {
    let (scenario, init) = toy_game(seed);
    let oracle = nash_best_response_iteration(&scenario, 1e-8, 100_000).unwrap();
    let graph = toy_graph(scenario.consumers(), seed);
    let config = RunConfig {
        tol: 1e-9,
        max_iter: 20_000,
        record_every: 100,
    };
    let (r1, t1) = alg1(&scenario, &init, config);
    let (r2, t2) = alg2(&scenario, &graph, &init, config);
    let (r3, t3) = alg3(
        &scenario,
        &graph,
        &init,
        seed,
        GossipConfig {
            tol: 1e-9,
            max_events: 200_000,
            record_every: 1000,
            window: 5,
        },
    );
    ToyRuns {
        worst: [
            linf(&r1.profiles, &oracle.profiles),
            linf(&r2.profiles, &oracle.profiles),
            linf(&r3.profiles, &oracle.profiles),
        ],
        oracle_residual: oracle.residual,
        traces: vec![t1, t2, t3],
    }
}

fn criterion_4(csv: &mut Vec<String>) -> Outcome {
    let mut worst = [0.0f64; 3];
    let mut oracle_residual = 0.0f64;
    for seed in 0..20 {
        let runs = toy_runs(seed);
        for k in 0..3 {
            worst[k] = worst[k].max(runs.worst[k]);
        }
        oracle_residual = oracle_residual.max(runs.oracle_residual);
        csv.extend(runs.traces.iter().map(RunTrace::to_csv_string));
    }
    check(
        worst.iter().all(|w| *w <= 1e-3) && oracle_residual <= 1e-6,
        format!(
            "20 toy games: L-inf to oracle alg1 {:.2e}, alg2 {:.2e}, alg3 {:.2e} (tol 1e-3); oracle residual {oracle_residual:.2e} (tol 1e-6)",
            worst[0], worst[1], worst[2]
        ),
    )
}

// ---------------------------------------------------------------- 5

const CANONICAL_SEED: u64 = 1;

struct CanonicalRuns {
    alg1: (dsm_core::SolveResult, RunTrace),
    alg2: (dsm_core::SolveResult, RunTrace),
    alg3: (dsm_core::SolveResult, RunTrace),
}

fn canonical_runs(seed: u64) -> CanonicalRuns {
    let g = canonical(seed);
    let graph = canonical_graph(seed);
    let config = RunConfig {
        tol: 1e-4,
        max_iter: 500,
        record_every: 1,
    };
    CanonicalRuns {
        alg1: alg1(&g.scenario, &g.initial, config),
        alg2: alg2(&g.scenario, &graph, &g.initial, config),
        alg3: alg3(
            &g.scenario,
            &graph,
            &g.initial,
            seed,
            GossipConfig {
                tol: 1e-4,
                max_events: 5000,
                record_every: 50,
                window: 5,
            },
        ),
    }
}

/// Largest relative change of any consumer's bill after iteration `from`.
fn cost_drift(trace: &RunTrace, from: usize) -> f64 {
    let base = trace.records.iter().find(|r| r.t == from).expect("iteration recorded");
    trace
        .records
        .iter()
        .filter(|r| r.t > from)
        .flat_map(|r| r.costs.iter().zip(&base.costs).map(|(c, b)| (c - b).abs() / b.abs()))
        .fold(0.0, f64::max)
}

fn criterion_5(runs: &CanonicalRuns) -> Outcome {
    let (r1, t1) = &runs.alg1;
    let (r2, t2) = &runs.alg2;
    let (r3, _) = &runs.alg3;
    let drift1 = cost_drift(t1, 50);
    let drift2 = cost_drift(t2, 50);
    let agg1 = model::aggregate(&r1.profiles);
    let agg3 = model::aggregate(&r3.profiles);
    let gap3 = rel_linf(&agg3, &agg1);
    let pass = r1.residual <= 1e-4 && r2.residual <= 1e-4 && drift1 < 0.01 && drift2 < 0.01 && gap3 <= 1e-2;
    check(
        pass,
        format!(
            "alg1 residual {:.2e} at iteration {}, alg2 residual {:.2e} at iteration {} (tol 1e-4 within 500); \
             cost drift after t=50 alg1 {:.2e}, alg2 {:.2e} (tol 1e-2); alg3 aggregate rel L-inf {:.2e} after {} events (tol 1e-2)",
            r1.residual,
            r1.iterations,
            r2.residual,
            r2.iterations,
            drift1,
            drift2,
            gap3,
            r3.iterations - 1
        ),
    )
}

// ---------------------------------------------------------------- 6

fn criterion_6(csv: &mut Vec<String>) -> Outcome {
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for seed in 1..=5 {
        let g = canonical(seed);
        let (r, t) = alg1(
            &g.scenario,
            &g.initial,
            RunConfig {
                tol: 1e-4,
                max_iter: 500,
                record_every: 50,
            },
        );
        let before = model::par(&model::aggregate(&g.initial)).unwrap();
        let after = model::par(&model::aggregate(&r.profiles)).unwrap();
        worst = worst.max(after / before);
        parts.push(format!("{before:.3}->{after:.3}"));
        csv.push(t.to_csv_string());
    }
    check(
        worst <= 0.8,
        format!("PAR per seed {}; worst final/initial {worst:.3} (tol 0.8)", parts.join(", ")),
    )
}

// ---------------------------------------------------------------- 7

fn criterion_7() -> Outcome {
    // Slot 0 off-peak, slot 1 on-peak. A is flexible with the larger budget,
    // B must put most of its energy on-peak.
    let curve = PriceCurve::new(vec![1.0, 3.0], vec![1.0, 1.0], vec![0.0, 0.0]).unwrap();
    let a = ConsumerSpec::new(vec![0.0, 0.0], vec![10.0, 10.0], 6.0).unwrap();
    let b = ConsumerSpec::new(vec![0.0, 4.0], vec![0.5, 5.0], 4.5).unwrap();
    let scenario = Scenario::new(vec![a, b], curve.clone()).unwrap();
    let ne = nash_best_response_iteration(&scenario, 1e-8, 10_000).unwrap();
    let q = &ne.profiles;
    let q_sigma = model::aggregate(q);
    let budgets = scenario.budgets();
    let inst: Vec<f64> = q.iter().map(|p| bill_instantaneous(p, &q_sigma, &curve).unwrap()).collect();
    let total: Vec<f64> = (0..2)
        .map(|n| bill_total_load(n, q, &budgets, &curve).unwrap())
        .collect();
    let grid = grid_cost(&q_sigma, &curve).unwrap();
    let sums = ((inst[0] + inst[1]) - (total[0] + total[1])).abs().max((inst[0] + inst[1] - grid).abs());
    let shape = budgets[0] > budgets[1] && q[0][1] < q[1][1];
    check(
        shape && inst[0] < inst[1] && total[0] > total[1] && sums <= 1e-10,
        format!(
            "E_A {} > E_B {}, on-peak A {:.3} < B {:.3}; instantaneous A {:.4} < B {:.4}; total-load A {:.4} > B {:.4}; sum mismatch {sums:.1e} (tol 1e-10)",
            budgets[0], budgets[1], q[0][1], q[1][1], inst[0], inst[1], total[0], total[1]
        ),
    )
}

// ---------------------------------------------------------------- 8

fn criterion_8(runs: &CanonicalRuns) -> Outcome {
    let mut worst_toy = f64::NEG_INFINITY;
    let mut min_toy = f64::INFINITY;
    for seed in 0..20 {
        let (scenario, _) = toy_game(seed);
        let ne = nash_best_response_iteration(&scenario, 1e-8, 100_000).unwrap();
        let ne_cost = grid_cost(&model::aggregate(&ne.profiles), scenario.curve()).unwrap();
        let opt = social_welfare_optimum(&scenario, 1e-12, 100_000).unwrap();
        let gap = (ne_cost - opt.total_cost) / opt.total_cost;
        worst_toy = worst_toy.max(gap);
        min_toy = min_toy.min(gap);
    }
    let g = canonical(CANONICAL_SEED);
    let ne_cost = grid_cost(&model::aggregate(&runs.alg1.0.profiles), g.scenario.curve()).unwrap();
    let opt = social_welfare_optimum(&g.scenario, 1e-10, 100_000).unwrap();
    let gap = (ne_cost - opt.total_cost) / opt.total_cost;
    check(
        min_toy >= 0.0 && worst_toy <= 0.05 && gap >= 0.0 && gap <= 0.05,
        format!(
            "toy games gap in [{min_toy:.2e}, {worst_toy:.2e}]; N=50 gap {gap:.2e} (NE {ne_cost:.4}, optimum {:.4}); bar [0, 5%]",
            opt.total_cost
        ),
    )
}

// ---------------------------------------------------------------- 9

fn criterion_9(runs: &CanonicalRuns) -> Outcome {
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let conservation = max(&runs.alg2.1.conservation_error).max(max(&runs.alg3.1.conservation_error));
    let budget = [&runs.alg1.1, &runs.alg2.1, &runs.alg3.1]
        .iter()
        .map(|t| max(&t.budget_error))
        .fold(0.0, f64::max);
    let every = runs.alg2.1.conservation_error.len() == runs.alg2.0.iterations
        && runs.alg3.1.conservation_error.len() == runs.alg3.0.iterations
        && runs.alg1.1.budget_error.len() == runs.alg1.0.iterations;
    check(
        every && conservation <= 1e-9 && budget <= 1e-8,
        format!("max conservation error {conservation:.2e} (tol 1e-9); max budget error {budget:.2e} (tol 1e-8); checked at every iterate: {every}"),
    )
}

// ---------------------------------------------------------------- 10

fn criterion_10(first: &[String]) -> Outcome {
    let mut again = Vec::new();
    for seed in 0..20 {
        again.extend(toy_runs(seed).traces.iter().map(RunTrace::to_csv_string));
    }
    let runs = canonical_runs(CANONICAL_SEED);
    again.extend([&runs.alg1.1, &runs.alg2.1, &runs.alg3.1].map(RunTrace::to_csv_string));
    criterion_6(&mut again);
    let same = first.len() == again.len() && first.iter().zip(&again).all(|(a, b)| a == b);
    let bytes: usize = first.iter().map(String::len).sum();
    check(
        same,
        format!("{} trace files ({bytes} bytes) byte-identical on re-run: {same}", first.len()),
    )
}

fn main() {
    let mut results: Vec<(u32, Outcome, Duration, u64)> = Vec::new();
    // Criterion 10 has no runtime bar.
    let mut timed = |id: u32, limit: u64, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let line = format!(
            "criterion {id:>2}: {} ({:.2} s{}) {}",
            if outcome.pass && elapsed.as_secs() < limit { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            if limit == u64::MAX { String::new() } else { format!(", limit {limit} s") },
            outcome.detail
        );
        println!("{line}");
        results.push((id, outcome, elapsed, limit));
    };

    let mut csv = Vec::new();
    timed(1, 5, &mut criterion_1);
    timed(2, 5, &mut criterion_2);
    timed(3, 10, &mut criterion_3);
    timed(4, 30, &mut || criterion_4(&mut csv));
    let mut canonical = None;
    timed(5, 60, &mut || {
        let runs = canonical_runs(CANONICAL_SEED);
        let out = criterion_5(&runs);
        canonical = Some(runs);
        out
    });
    let runs = canonical.expect("criterion 5 ran");
    csv.extend([&runs.alg1.1, &runs.alg2.1, &runs.alg3.1].map(RunTrace::to_csv_string));
    timed(6, 60, &mut || criterion_6(&mut csv));
    timed(7, 5, &mut criterion_7);
    timed(8, 60, &mut || criterion_8(&runs));
    timed(9, 60, &mut || criterion_9(&runs));
    timed(10, u64::MAX, &mut || criterion_10(&csv));

    let failed: Vec<u32> = results
        .iter()
        .filter(|(_, o, t, limit)| !(o.pass && t.as_secs() < *limit))
        .map(|(id, ..)| *id)
        .collect();
    println!(
        "acceptance: {} of {} criteria passed{}",
        results.len() - failed.len(),
        results.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!("; failing: {failed:?}")
        }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}

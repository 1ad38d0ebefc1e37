//! Reference solvers that share no code path with the equilibrium-seeking
//! algorithms: per-consumer best responses, cyclic best-response sweeps for
//! small games, and the social-welfare (total cost) minimizer.
//!
//! Best responses are solved through their optimality conditions by
//! bisection on the budget multiplier; the welfare problem uses projected
//! gradient with Armijo backtracking along the projection arc.

use serde::Serialize;

use crate::algorithms::{fixed_point_residual, Scenario};
use crate::error::{DsmError, Result};
use crate::feasible::ConsumerSpec;
use crate::model::{self, PriceCurve};

/// Largest instance the best-response oracle accepts.
pub const ORACLE_MAX_CONSUMERS: usize = 6;
pub const ORACLE_MAX_HORIZON: usize = 6;

// A demanding sufficient-decrease constant keeps accepted steps below 1/L, so the
// step doubling cannot settle near 2/L where iterates barely contract.
const ARMIJO: f64 = 0.5;
const MAX_BACKTRACKS: usize = 60;

/// Box midpoint projected onto the budget face.
fn central_start(spec: &ConsumerSpec) -> Vec<f64> {
    let mid: Vec<f64> = spec
        .q_min
        .iter()
        .zip(&spec.q_max)
        .map(|(lo, hi)| 0.5 * (lo + hi))
        .collect();
    let mut out = vec![0.0; mid.len()];
    spec.project_into(&mid, &mut out);
    out
}

fn own_gradient(q: &[f64], others: &[f64], curve: &PriceCurve, out: &mut [f64]) {
    for h in 0..q.len() {
        let load = q[h] + others[h];
        out[h] = curve.derivative_unchecked(h, load) * q[h] + curve.price_unchecked(h, load);
    }
}

fn stationarity(q: &[f64], grad: &[f64], spec: &ConsumerSpec, scratch: &mut [f64], out: &mut [f64]) -> f64 {
    for h in 0..q.len() {
        scratch[h] = q[h] - grad[h];
    }
    spec.project_into(scratch, out);
    q.iter().zip(out.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Minimizer of consumer n's bill over `Q_n` against a fixed aggregate of the others.
///
/// The bill is separable across slots with strictly increasing marginal cost
/// `g_h(x) = p_h'(x + o_h) x + p_h(x + o_h)`, so the minimizer is
/// `x_h = clamp(g_h^{-1}(mu), lo_h, hi_h)` for the multiplier `mu` that meets the
/// budget. Both levels are found by bisection. Fails if the result misses the
/// stationarity test `||q - [q - grad]_{Q_n}||_inf <= tol`.
pub fn best_response(
    others_aggregate: &[f64],
    spec: &ConsumerSpec,
    curve: &PriceCurve,
    tol: f64,
) -> Result<Vec<f64>> {
    spec.validate().map_err(DsmError::InvalidSpec)?;
    DsmError::check_len("consumer horizon", curve.horizon(), spec.horizon())?;
    DsmError::check_len("others aggregate", curve.horizon(), others_aggregate.len())?;
    if others_aggregate.iter().any(|x| !(*x >= 0.0)) {
        return Err(DsmError::arg("others' aggregate must be nonnegative"));
    }
    best_response_checked(others_aggregate, spec, curve, tol)
}

fn best_response_checked(others: &[f64], spec: &ConsumerSpec, curve: &PriceCurve, tol: f64) -> Result<Vec<f64>> {
    let q = solve_best_response(others, spec, curve);
    let h = q.len();
    let mut grad = vec![0.0; h];
    own_gradient(&q, others, curve, &mut grad);
    let residual = stationarity(&q, &grad, spec, &mut vec![0.0; h], &mut vec![0.0; h]);
    if residual > tol {
        return Err(DsmError::NotConverged { iterations: 1, residual });
    }
    Ok(q)
}

fn marginal_cost(curve: &PriceCurve, h: usize, x: f64, other: f64) -> f64 {
    let load = x + other;
    curve.derivative_unchecked(h, load) * x + curve.price_unchecked(h, load)
}

/// Shrinks `[lo, hi]` to adjacent floats around the switch point of the
/// monotone predicate `below` (true towards `lo`, false towards `hi`).
fn bisect(mut lo: f64, mut hi: f64, mut below: impl FnMut(f64) -> bool) -> (f64, f64) {
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if below(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, hi)
}

fn slot_response(curve: &PriceCurve, h: usize, lo: f64, hi: f64, other: f64, mu: f64) -> f64 {
    if marginal_cost(curve, h, lo, other) >= mu {
        return lo;
    }
    if marginal_cost(curve, h, hi, other) <= mu {
        return hi;
    }
    let (a, b) = bisect(lo, hi, |x| marginal_cost(curve, h, x, other) < mu);
    0.5 * (a + b)
}

fn solve_best_response(others: &[f64], spec: &ConsumerSpec, curve: &PriceCurve) -> Vec<f64> {
    let horizon = spec.horizon();
    let at = |mu: f64| -> Vec<f64> {
        (0..horizon)
            .map(|h| slot_response(curve, h, spec.q_min[h], spec.q_max[h], others[h], mu))
            .collect()
    };
    let mu_lo = (0..horizon)
        .map(|h| marginal_cost(curve, h, spec.q_min[h], others[h]))
        .fold(f64::INFINITY, f64::min);
    let mu_hi = (0..horizon)
        .map(|h| marginal_cost(curve, h, spec.q_max[h], others[h]))
        .fold(f64::NEG_INFINITY, f64::max);
    let (mu_lo, mu_hi) = bisect(mu_lo, mu_hi, |mu| at(mu).iter().sum::<f64>() < spec.energy);
    // Close the remaining budget gap between the two bracketing responses.
    let low = at(mu_lo);
    let high = at(mu_hi);
    let (s_low, s_high): (f64, f64) = (low.iter().sum(), high.iter().sum());
    let t = if s_high > s_low {
        ((spec.energy - s_low) / (s_high - s_low)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    low.iter()
        .zip(&high)
        .enumerate()
        .map(|(h, (l, u))| (l + t * (u - l)).clamp(spec.q_min[h], spec.q_max[h]))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NashOracleResult {
    pub profiles: Vec<Vec<f64>>,
    pub sweeps: usize,
    /// Natural-map residual (probe step 1) at the returned point.
    pub residual: f64,
}

/// Gauss-Seidel best-response sweeps until the sweep-to-sweep change is at most `tol`.
pub fn nash_best_response_iteration(
    scenario: &Scenario,
    tol: f64,
    max_sweeps: usize,
) -> Result<NashOracleResult> {
    let start = scenario.specs().iter().map(central_start).collect();
    nash_best_response_from(scenario, start, tol, max_sweeps)
}

/// Same sweeps as [`nash_best_response_iteration`] from a caller-chosen feasible start.
pub fn nash_best_response_from(
    scenario: &Scenario,
    start: Vec<Vec<f64>>,
    tol: f64,
    max_sweeps: usize,
) -> Result<NashOracleResult> {
    if scenario.consumers() > ORACLE_MAX_CONSUMERS || scenario.horizon() > ORACLE_MAX_HORIZON {
        return Err(DsmError::arg(format!(
            "best-response oracle is limited to N <= {ORACLE_MAX_CONSUMERS} and H <= {ORACLE_MAX_HORIZON}, got N = {} and H = {}",
            scenario.consumers(),
            scenario.horizon()
        )));
    }
    if !scenario.uniqueness_verified() {
        return Err(DsmError::arg(
            "best-response oracle needs a scenario passing the uniqueness certificate",
        ));
    }
    if !(tol > 0.0) || max_sweeps == 0 {
        return Err(DsmError::arg("best-response oracle needs tol > 0 and max_sweeps > 0"));
    }
    scenario.check_profiles(&start, 1e-8)?;
    let curve = scenario.curve();
    let inner_tol = (0.01 * tol).max(1e-12);
    let mut profiles = start;
    let mut q_sigma = model::aggregate(&profiles);
    for sweep in 1..=max_sweeps {
        let mut change: f64 = 0.0;
        for (n, spec) in scenario.specs().iter().enumerate() {
            let others: Vec<f64> = q_sigma
                .iter()
                .zip(&profiles[n])
                .map(|(s, x)| (s - x).max(0.0))
                .collect();
            let next = best_response_checked(&others, spec, curve, inner_tol)?;
            for h in 0..next.len() {
                change = f64::max(change, (next[h] - profiles[n][h]).abs());
                q_sigma[h] = others[h] + next[h];
            }
            profiles[n] = next;
        }
        q_sigma = model::aggregate(&profiles);
        if change <= tol {
            let residual = fixed_point_residual(&profiles, scenario, 1.0);
            return Ok(NashOracleResult {
                profiles,
                sweeps: sweep,
                residual,
            });
        }
    }
    Err(DsmError::NotConverged {
        iterations: max_sweeps,
        residual: fixed_point_residual(&profiles, scenario, 1.0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WelfareOptimum {
    pub profiles: Vec<Vec<f64>>,
    pub total_cost: f64,
    pub iterations: usize,
    /// Joint projected-gradient stationarity at the returned point.
    pub residual: f64,
    pub converged: bool,
}

/// `total(l + delta) - total(l)`, formed without cancellation so the line search
/// still sees decreases far below the rounding error of the total itself.
fn cost_change(load: &[f64], delta: &[f64], curve: &PriceCurve) -> f64 {
    (0..load.len())
        .map(|h| {
            let (l, d) = (load[h], delta[h]);
            let (a, b, c) = (curve.a()[h], curve.b()[h], curve.c()[h]);
            let power = if l > 0.0 && d > -l {
                l.powf(b + 1.0) * ((b + 1.0) * (d / l).ln_1p()).exp_m1()
            } else {
                (l + d).max(0.0).powf(b + 1.0) - l.powf(b + 1.0)
            };
            a * power + c * d
        })
        .sum()
}

/// Minimizes the total grid cost `sum_h p_h(q_sigma^h) q_sigma^h` over `Q_1 x ... x Q_N`.
pub fn social_welfare_optimum(scenario: &Scenario, tol: f64, max_iter: usize) -> Result<WelfareOptimum> {
    if !(tol >= 0.0) || max_iter == 0 {
        return Err(DsmError::arg("welfare optimizer needs tol >= 0 and max_iter > 0"));
    }
    let curve = scenario.curve();
    let horizon = scenario.horizon();
    let specs = scenario.specs();
    let total = |q_sigma: &[f64]| model::bill_unchecked(q_sigma, q_sigma, curve);
    // Every consumer sees the same partial derivative: d/dL [p(L) L] at L = q_sigma^h.
    let marginal = |q_sigma: &[f64]| -> Vec<f64> {
        (0..horizon)
            .map(|h| curve.derivative_unchecked(h, q_sigma[h]) * q_sigma[h] + curve.price_unchecked(h, q_sigma[h]))
            .collect()
    };

    let mut q: Vec<Vec<f64>> = specs.iter().map(central_start).collect();
    let mut trial = q.clone();
    let mut scratch = vec![0.0; horizon];
    let mut delta = vec![0.0; horizon];
    let mut step = 1.0;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let q_sigma = model::aggregate(&q);
        let grad = marginal(&q_sigma);
        residual = 0.0;
        for (n, spec) in specs.iter().enumerate() {
            residual = f64::max(residual, stationarity(&q[n], &grad, spec, &mut scratch, &mut trial[n]));
        }
        if residual <= tol {
            break;
        }
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            let mut decrease = 0.0;
            for (n, spec) in specs.iter().enumerate() {
                for h in 0..horizon {
                    scratch[h] = q[n][h] - step * grad[h];
                }
                spec.project_into(&scratch, &mut trial[n]);
                for h in 0..horizon {
                    decrease += grad[h] * (trial[n][h] - q[n][h]);
                }
            }
            for h in 0..horizon {
                delta[h] = trial.iter().zip(&q).map(|(t, c)| t[h] - c[h]).sum();
            }
            if cost_change(&q_sigma, &delta, curve) <= ARMIJO * decrease {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        std::mem::swap(&mut q, &mut trial);
        step = (step * 2.0).min(1e6);
    }
    let q_sigma = model::aggregate(&q);
    Ok(WelfareOptimum {
        total_cost: total(&q_sigma),
        profiles: q,
        iterations,
        converged: residual <= tol,
        residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FairnessRow {
    pub consumer: usize,
    pub energy: f64,
    pub bill_instantaneous: f64,
    pub bill_total_load: f64,
    /// The consumer's own peak-to-average ratio.
    pub par: f64,
}

/// Both billing outcomes and individual PAR for every consumer.
pub fn fairness_comparison(profiles: &[Vec<f64>], scenario: &Scenario) -> Result<Vec<FairnessRow>> {
    scenario.check_profiles(profiles, 1e-8)?;
    let curve = scenario.curve();
    let q_sigma = model::aggregate(profiles);
    let budgets = scenario.budgets();
    let grid = model::bill_unchecked(&q_sigma, &q_sigma, curve);
    let budget_total: f64 = budgets.iter().sum();
    profiles
        .iter()
        .enumerate()
        .map(|(n, q)| {
            Ok(FairnessRow {
                consumer: n,
                energy: budgets[n],
                bill_instantaneous: model::bill_unchecked(q, &q_sigma, curve),
                bill_total_load: budgets[n] / budget_total * grid,
                par: model::par(q)?,
            })
        })
        .collect()
}

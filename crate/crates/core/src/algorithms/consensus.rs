use super::trace::Recorder;
use super::{
    estimated_aggregate, projected_step, residual_with_aggregate, RunConfig, RunTrace, Scenario,
    SolveResult, StepSchedule,
};
use crate::error::{DsmError, Result};
use crate::model;
use crate::network::{CommGraph, WeightMatrix};

/// Synchronous agreement-based iteration without an aggregator.
///
/// Per round, from the round-t snapshot, every consumer mixes its neighbors'
/// average estimates, takes a projected step against `N * estimate`, and
/// tracks its own profile change into the estimate.
pub fn run_algorithm2(
    scenario: &Scenario,
    graph: &CommGraph,
    weights: &WeightMatrix,
    schedule: StepSchedule,
    init: &[Vec<f64>],
    config: RunConfig,
) -> Result<(SolveResult, RunTrace)> {
    let consumers = scenario.consumers();
    DsmError::check_len("graph nodes", consumers, graph.nodes())?;
    if !graph.is_connected() {
        return Err(DsmError::Disconnected);
    }
    weights.check(graph, 1e-12)?;
    schedule.validate()?;
    config.validate()?;
    scenario.check_profiles(init, 1e-8)?;

    let horizon = scenario.horizon();
    let curve = scenario.curve();
    let mut q = init.to_vec();
    let mut next = init.to_vec();
    let mut est = init.to_vec();
    let mut mixed = vec![vec![0.0; horizon]; consumers];
    let mut seen = vec![0.0; horizon];
    let mut grad = vec![0.0; horizon];
    let mut scratch = vec![0.0; horizon];
    let mut recorder = Recorder::new(scenario, config.record_every);

    let mut t = 1;
    let (converged, residual) = loop {
        let q_sigma = model::aggregate(&q);
        let residual = residual_with_aggregate(&q, &q_sigma, scenario, 1.0);
        recorder.observe(t, &q, &q_sigma, Some(&est), residual);
        if residual <= config.tol || t == config.max_iter {
            recorder.finish(t, &q, &q_sigma, Some(&est), residual);
            break (residual <= config.tol, residual);
        }

        for n in 0..consumers {
            let row = &mut mixed[n];
            let w_self = weights.get(n, n);
            for h in 0..horizon {
                row[h] = w_self * est[n][h];
            }
            for &k in graph.neighbors(n) {
                let w = weights.get(n, k);
                for h in 0..horizon {
                    row[h] += w * est[k][h];
                }
            }
        }

        let alpha = schedule.step(t);
        for n in 0..consumers {
            estimated_aggregate(consumers, &mixed[n], &q[n], &mut seen);
            model::mapping_into(&q[n], &seen, curve, &mut grad);
            projected_step(&scenario.specs()[n], &q[n], &grad, alpha, &mut scratch, &mut next[n]);
            for h in 0..horizon {
                est[n][h] = mixed[n][h] + next[n][h] - q[n][h];
            }
        }
        std::mem::swap(&mut q, &mut next);
        t += 1;
    };

    Ok((
        SolveResult {
            profiles: q,
            iterations: t,
            converged,
            residual,
            uniqueness_verified: scenario.uniqueness_verified(),
        },
        recorder.trace,
    ))
}

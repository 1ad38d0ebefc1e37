use super::trace::Recorder;
use super::{
    estimated_aggregate, projected_step, residual_with_aggregate, RunTrace, Scenario, SolveResult,
};
use crate::error::{DsmError, Result};
use crate::model;
use crate::network::{CommGraph, GossipEvent};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GossipConfig {
    pub tol: f64,
    pub max_events: usize,
    pub record_every: usize,
    /// Consecutive sub-tolerance residual readings (taken every N events) needed to stop.
    pub window: usize,
}

impl Default for GossipConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_events: 10_000,
            record_every: 1,
            window: 5,
        }
    }
}

/// Asynchronous gossip-based iteration.
///
/// At event `t` only the initiator and its contact act: both adopt the mean
/// of their two estimates, bump their update counters, and take the
/// consensus-style projected step with their own step `1 / count`. Everyone
/// else keeps its state. The iteration index of the returned result counts
/// the initial point as 1, so it equals events applied plus one.
pub fn run_algorithm3<I>(
    scenario: &Scenario,
    graph: &CommGraph,
    events: I,
    init: &[Vec<f64>],
    config: GossipConfig,
) -> Result<(SolveResult, RunTrace)>
where
    I: IntoIterator<Item = GossipEvent>,
{
    let consumers = scenario.consumers();
    DsmError::check_len("graph nodes", consumers, graph.nodes())?;
    if !graph.is_connected() {
        return Err(DsmError::Disconnected);
    }
    if config.max_events == 0 || config.record_every == 0 || config.window == 0 {
        return Err(DsmError::arg("max_events, record_every and window must be positive"));
    }
    scenario.check_profiles(init, 1e-8)?;

    let horizon = scenario.horizon();
    let curve = scenario.curve();
    let mut q = init.to_vec();
    let mut est = init.to_vec();
    let mut counts = vec![0usize; consumers];
    let mut avg = vec![0.0; horizon];
    let mut seen = vec![0.0; horizon];
    let mut grad = vec![0.0; horizon];
    let mut scratch = vec![0.0; horizon];
    let mut updated = vec![0.0; horizon];
    let mut recorder = Recorder::new(scenario, config.record_every);
    let mut events = events.into_iter();

    let mut residual = f64::INFINITY;
    let mut streak = 0usize;
    let mut t = 1;
    let converged = loop {
        let q_sigma = model::aggregate(&q);
        if (t - 1) % consumers == 0 {
            residual = residual_with_aggregate(&q, &q_sigma, scenario, 1.0);
            streak = if residual <= config.tol { streak + 1 } else { 0 };
        }
        recorder.observe(t, &q, &q_sigma, Some(&est), residual);
        if streak >= config.window {
            break true;
        }
        if t > config.max_events {
            break false;
        }
        let Some(event) = events.next() else {
            break false;
        };
        let (i, j) = (event.initiator, event.contact);
        if i == j || i >= consumers || j >= consumers || !graph.has_edge(i, j) {
            return Err(DsmError::arg(format!(
                "event {} pairs {i} and {j}, which are not neighbors",
                event.t
            )));
        }
        recorder.trace.events.push(event);

        for h in 0..horizon {
            avg[h] = 0.5 * (est[i][h] + est[j][h]);
        }
        for n in [i, j] {
            counts[n] += 1;
            let alpha = 1.0 / counts[n] as f64;
            estimated_aggregate(consumers, &avg, &q[n], &mut seen);
            model::mapping_into(&q[n], &seen, curve, &mut grad);
            projected_step(&scenario.specs()[n], &q[n], &grad, alpha, &mut scratch, &mut updated);
            for h in 0..horizon {
                est[n][h] = avg[h] + updated[h] - q[n][h];
            }
            q[n].copy_from_slice(&updated);
        }
        t += 1;
    };

    let q_sigma = model::aggregate(&q);
    let final_residual = residual_with_aggregate(&q, &q_sigma, scenario, 1.0);
    recorder.finish(t, &q, &q_sigma, Some(&est), final_residual);
    Ok((
        SolveResult {
            profiles: q,
            iterations: t,
            converged: converged && final_residual <= config.tol,
            residual: final_residual,
            uniqueness_verified: scenario.uniqueness_verified(),
        },
        recorder.trace,
    ))
}

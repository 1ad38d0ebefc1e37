use super::trace::Recorder;
use super::{projected_step, residual_with_aggregate, RunConfig, RunTrace, Scenario, SolveResult, StepSchedule};
use crate::error::{DsmError, Result};
use crate::model;

/// Proximal-point iteration with a central aggregator.
///
/// Every round the aggregator broadcasts `q_sigma(t)` and each consumer applies
/// `q_n(t+1) = [q_n(t) - gamma(t) (F_n(q_n(t), q_sigma(t)) + theta (q_n(t) - q_n(t-1)))]_{Q_n}`
/// from the same round-t snapshot. `q_n(0)` is taken equal to `q_n(1)`.
pub fn run_algorithm1(
    scenario: &Scenario,
    theta: f64,
    schedule: StepSchedule,
    init: &[Vec<f64>],
    config: RunConfig,
) -> Result<(SolveResult, RunTrace)> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(DsmError::arg(format!("theta must be positive, got {theta}")));
    }
    schedule.validate()?;
    config.validate()?;
    scenario.check_profiles(init, 1e-8)?;

    let horizon = scenario.horizon();
    let curve = scenario.curve();
    let mut q = init.to_vec();
    let mut prev = init.to_vec();
    let mut next = init.to_vec();
    let mut grad = vec![0.0; horizon];
    let mut scratch = vec![0.0; horizon];
    let mut recorder = Recorder::new(scenario, config.record_every);

    let mut t = 1;
    let (converged, residual) = loop {
        let q_sigma = model::aggregate(&q);
        let residual = residual_with_aggregate(&q, &q_sigma, scenario, 1.0);
        recorder.observe(t, &q, &q_sigma, None, residual);
        if residual <= config.tol {
            recorder.finish(t, &q, &q_sigma, None, residual);
            break (true, residual);
        }
        if t == config.max_iter {
            recorder.finish(t, &q, &q_sigma, None, residual);
            break (false, residual);
        }

        let gamma = schedule.step(t);
        for n in 0..q.len() {
            model::mapping_into(&q[n], &q_sigma, curve, &mut grad);
            for h in 0..horizon {
                grad[h] += theta * (q[n][h] - prev[n][h]);
            }
            projected_step(&scenario.specs()[n], &q[n], &grad, gamma, &mut scratch, &mut next[n]);
        }
        std::mem::swap(&mut prev, &mut q);
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

//! Equilibrium seeking: the central proximal-point iteration, the synchronous
//! consensus-based iteration, and the asynchronous gossip-based iteration.

mod central;
mod consensus;
mod gossip;
mod trace;

pub use central::run_algorithm1;
pub use consensus::run_algorithm2;
pub use gossip::{run_algorithm3, GossipConfig};
pub use trace::{RunTrace, TraceRecord};

use serde::{Deserialize, Serialize};

use crate::error::{DsmError, Result};
use crate::feasible::ConsumerSpec;
use crate::model::{self, Certificate, PriceCurve};

/// N consumers sharing a horizon and a price curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    specs: Vec<ConsumerSpec>,
    curve: PriceCurve,
    certificate: Option<Certificate>,
}

impl Scenario {
    pub fn new(specs: Vec<ConsumerSpec>, curve: PriceCurve) -> Result<Self> {
        if specs.is_empty() {
            return Err(DsmError::arg("scenario needs at least one consumer"));
        }
        for spec in &specs {
            DsmError::check_len("consumer horizon", curve.horizon(), spec.horizon())?;
            spec.validate().map_err(DsmError::InvalidSpec)?;
        }
        let certificate = if specs.len() >= 2 {
            Some(model::uniqueness_certificate(specs.len(), &curve)?)
        } else {
            None
        };
        Ok(Self {
            specs,
            curve,
            certificate,
        })
    }

    pub fn consumers(&self) -> usize {
        self.specs.len()
    }

    pub fn horizon(&self) -> usize {
        self.curve.horizon()
    }

    pub fn specs(&self) -> &[ConsumerSpec] {
        &self.specs
    }

    pub fn curve(&self) -> &PriceCurve {
        &self.curve
    }

    pub fn budgets(&self) -> Vec<f64> {
        self.specs.iter().map(|s| s.energy).collect()
    }

    /// `None` for a single consumer, whose problem is a plain convex program.
    pub fn certificate(&self) -> Option<&Certificate> {
        self.certificate.as_ref()
    }

    /// False when the uniqueness condition fails; solvers still run but
    /// convergence to a unique point is not guaranteed.
    pub fn uniqueness_verified(&self) -> bool {
        self.certificate.as_ref().is_none_or(|c| c.holds)
    }

    pub(crate) fn check_profiles(&self, profiles: &[Vec<f64>], tol: f64) -> Result<()> {
        DsmError::check_len("profile set", self.consumers(), profiles.len())?;
        for (n, (spec, q)) in self.specs.iter().zip(profiles).enumerate() {
            if !spec.is_feasible(q, tol) {
                return Err(DsmError::arg(format!("profile of consumer {n} is infeasible")));
            }
        }
        Ok(())
    }

    /// A seeded feasible starting point for every consumer.
    pub fn sample_profiles<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        self.specs.iter().map(|s| s.sample_feasible(rng)).collect()
    }
}

/// Step-size rule `gamma(t)` for iteration `t >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StepSchedule {
    /// `t^{-exponent}`
    PowerDecay { exponent: f64 },
    Constant { value: f64 },
    /// `1 / count`, where `count` is the caller's own update count.
    FrequencyBased,
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule::PowerDecay { exponent: 0.51 }
    }
}

impl StepSchedule {
    pub fn step(&self, t: usize) -> f64 {
        let t = t.max(1) as f64;
        match *self {
            StepSchedule::PowerDecay { exponent } => t.powf(-exponent),
            StepSchedule::Constant { value } => value,
            StepSchedule::FrequencyBased => 1.0 / t,
        }
    }

    /// Non-summable, square-summable, and nonincreasing.
    pub fn is_diminishing(&self) -> bool {
        match *self {
            StepSchedule::PowerDecay { exponent } => exponent > 0.5 && exponent <= 1.0,
            StepSchedule::Constant { .. } => false,
            StepSchedule::FrequencyBased => true,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            StepSchedule::PowerDecay { exponent } if !(exponent > 0.0 && exponent.is_finite()) => {
                Err(DsmError::arg(format!("step exponent must be positive, got {exponent}")))
            }
            StepSchedule::Constant { value } if !(value > 0.0 && value.is_finite()) => {
                Err(DsmError::arg(format!("constant step must be positive, got {value}")))
            }
            _ => Ok(()),
        }
    }
}

/// Termination and recording settings shared by all three algorithms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    /// Natural-map residual threshold.
    pub tol: f64,
    /// Iteration (or event) budget; the initial point counts as iteration 1.
    pub max_iter: usize,
    /// Keep a full trace snapshot every this many iterations (the first and last are always kept).
    pub record_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 1000,
            record_every: 1,
        }
    }
}

impl RunConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tol >= 0.0) {
            return Err(DsmError::arg("tolerance must be nonnegative"));
        }
        if self.max_iter == 0 || self.record_every == 0 {
            return Err(DsmError::arg("max_iter and record_every must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub profiles: Vec<Vec<f64>>,
    /// Index of the final iterate (1 = the initial point).
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
    pub uniqueness_verified: bool,
}

/// `max_n || q_n - [q_n - s F_n(q_n, q_sigma)]_{Q_n} ||_inf`; zero exactly at the equilibrium.
pub fn fixed_point_residual(profiles: &[Vec<f64>], scenario: &Scenario, probe_step: f64) -> f64 {
    let q_sigma = model::aggregate(profiles);
    residual_with_aggregate(profiles, &q_sigma, scenario, probe_step)
}

pub(crate) fn residual_with_aggregate(
    profiles: &[Vec<f64>],
    q_sigma: &[f64],
    scenario: &Scenario,
    probe_step: f64,
) -> f64 {
    let h = scenario.horizon();
    let mut grad = vec![0.0; h];
    let mut trial = vec![0.0; h];
    let mut projected = vec![0.0; h];
    let mut worst = 0.0f64;
    for (spec, q) in scenario.specs().iter().zip(profiles) {
        model::mapping_into(q, q_sigma, scenario.curve(), &mut grad);
        for i in 0..h {
            trial[i] = q[i] - probe_step * grad[i];
        }
        spec.project_into(&trial, &mut projected);
        for i in 0..h {
            worst = worst.max((q[i] - projected[i]).abs());
        }
    }
    worst
}

/// Projected step `[q_n - step * direction]_{Q_n}` written into `out`.
pub(crate) fn projected_step(
    spec: &ConsumerSpec,
    q: &[f64],
    direction: &[f64],
    step: f64,
    scratch: &mut [f64],
    out: &mut [f64],
) {
    for i in 0..q.len() {
        scratch[i] = q[i] - step * direction[i];
    }
    spec.project_into(scratch, out);
}

/// Aggregate seen by a consumer from its average estimate: `N * est`, floored at
/// its own load since the true aggregate can never be smaller.
pub(crate) fn estimated_aggregate(consumers: usize, estimate: &[f64], own: &[f64], out: &mut [f64]) {
    let n = consumers as f64;
    for i in 0..out.len() {
        out[i] = (n * estimate[i]).max(own[i]);
    }
}

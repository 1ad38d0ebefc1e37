//! Demand-side management as an aggregative game.
//!
//! Consumers schedule their energy use over `H` slots under a load-dependent
//! polynomial price and pay per slot for what they draw. This crate provides
//! the price and billing model, exact projection onto each consumer's
//! feasible set, three equilibrium-seeking algorithms (central aggregator,
//! synchronous consensus, asynchronous gossip), reference solvers, and a
//! residential scenario generator.

// `!(x >= 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithms;
pub mod error;
pub mod feasible;
pub mod model;
pub mod network;
pub mod oracle;
pub mod scenario;

pub use algorithms::{
    fixed_point_residual, run_algorithm1, run_algorithm2, run_algorithm3, GossipConfig, RunConfig,
    RunTrace, Scenario, SolveResult, StepSchedule,
};
pub use error::{DsmError, Result};
pub use feasible::{ConsumerSpec, Violation};
pub use model::PriceCurve;
pub use network::{CommGraph, GossipEvent, WeightMatrix};

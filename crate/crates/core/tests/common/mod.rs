#![allow(dead_code)]

use dsm_core::algorithms::{run_algorithm1, run_algorithm2, run_algorithm3, GossipConfig, RunConfig, RunTrace, SolveResult};
use dsm_core::network::{generate_topology, CommGraph, GossipStream, WeightMatrix};
use dsm_core::scenario::{generate, BaseInterval, GenerationRecipe, GeneratedScenario};
use dsm_core::{ConsumerSpec, PriceCurve, Scenario, StepSchedule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const THETA: f64 = 0.2;
pub const TAU: f64 = 0.5;
pub const CANONICAL_DEGREE: f64 = 3.0;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn schedule() -> StepSchedule {
    StepSchedule::PowerDecay { exponent: 0.51 }
}

/// Small game with strongly curved prices. Seeds cycle through N in {2,3,4}
/// and H in {2,3}.
pub fn toy_game(seed: u64) -> (Scenario, Vec<Vec<f64>>) {
    let mut r = rng(1000 + seed);
    let consumers = 2 + (seed % 3) as usize;
    let horizon = 2 + ((seed / 3) % 2) as usize;
    let a = (0..horizon).map(|_| r.gen_range(0.5..1.5)).collect();
    let b = (0..horizon).map(|_| r.gen_range(1.0..2.0)).collect();
    let c = (0..horizon).map(|_| r.gen_range(0.0..0.5)).collect();
    let curve = PriceCurve::new(a, b, c).unwrap();
    let specs: Vec<ConsumerSpec> = (0..consumers)
        .map(|_| {
            let lo: Vec<f64> = (0..horizon).map(|_| r.gen_range(0.0..0.5)).collect();
            let hi: Vec<f64> = lo.iter().map(|l| l + r.gen_range(0.5..1.5)).collect();
            let (smin, smax): (f64, f64) = (lo.iter().sum(), hi.iter().sum());
            let e = smin + r.gen_range(0.2..0.8) * (smax - smin);
            ConsumerSpec::new(lo, hi, e).unwrap()
        })
        .collect();
    let scenario = Scenario::new(specs, curve).unwrap();
    let init = scenario.sample_profiles(&mut r).unwrap();
    (scenario, init)
}

pub fn toy_graph(consumers: usize, seed: u64) -> CommGraph {
    generate_topology(consumers, 1.5, &mut rng(2000 + seed)).unwrap()
}

pub fn canonical(seed: u64) -> GeneratedScenario {
    let recipe = GenerationRecipe {
        seed,
        ..Default::default()
    };
    generate(&recipe, &BaseInterval::default_residential()).unwrap()
}

pub fn canonical_graph(seed: u64) -> CommGraph {
    generate_topology(50, CANONICAL_DEGREE, &mut rng(3000 + seed)).unwrap()
}

pub fn alg1(scenario: &Scenario, init: &[Vec<f64>], config: RunConfig) -> (SolveResult, RunTrace) {
    run_algorithm1(scenario, THETA, schedule(), init, config).unwrap()
}

pub fn alg2(scenario: &Scenario, graph: &CommGraph, init: &[Vec<f64>], config: RunConfig) -> (SolveResult, RunTrace) {
    let w = WeightMatrix::build(graph, TAU).unwrap();
    run_algorithm2(scenario, graph, &w, schedule(), init, config).unwrap()
}

pub fn alg3(
    scenario: &Scenario,
    graph: &CommGraph,
    init: &[Vec<f64>],
    clock_seed: u64,
    config: GossipConfig,
) -> (SolveResult, RunTrace) {
    let events = GossipStream::new(graph, rng(4000 + clock_seed)).unwrap();
    run_algorithm3(scenario, graph, events, init, config).unwrap()
}

pub fn linf(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// `max_h |a_h - b_h| / max_h |b_h|`.
pub fn rel_linf(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().map(|x| x.abs()).fold(0.0, f64::max);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

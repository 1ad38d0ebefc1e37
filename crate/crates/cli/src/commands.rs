use std::path::Path;

use anyhow::{anyhow, bail, Context};
use dsm_core::algorithms::{run_algorithm1, run_algorithm2, run_algorithm3, GossipConfig, RunConfig, StepSchedule};
use dsm_core::model;
use dsm_core::network::{generate_topology, CommGraph, GossipStream, WeightMatrix};
use dsm_core::oracle;
use dsm_core::scenario::{generate as generate_scenario, BaseInterval, GenerationRecipe, ScenarioFile};
use dsm_core::Scenario;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{read_text, write_json, write_text, Cli, Failure, GenerateArgs, OracleArgs, OracleKind, RunArgs, Topology};

// Independent ChaCha streams derived from the single `--seed`.
const TOPOLOGY_STREAM: u64 = 0;
const GOSSIP_STREAM: u64 = 1;
const INITIAL_STREAM: u64 = 2;

/// Where an output came from: the scenario it was computed on and the exact invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub scenario_hash: String,
    pub flags: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub provenance: Provenance,
    pub algorithm: u8,
    pub converged: bool,
    /// Final iterate index; the initial point is iteration 1.
    pub iterations: usize,
    /// Gossip events applied (algorithm 3 only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<usize>,
    pub residual: f64,
    pub initial_par: f64,
    pub final_par: f64,
    pub initial_total_cost: f64,
    pub total_cost: f64,
    /// `verified` or `unverified`.
    pub uniqueness: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
    pub final_aggregate: Vec<f64>,
    pub profiles: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleOutput {
    pub provenance: Provenance,
    pub kind: OracleKind,
    pub converged: bool,
    /// Best-response sweeps (nash) or gradient iterations (welfare).
    pub iterations: usize,
    pub residual: f64,
    pub total_cost: f64,
    pub profiles: Vec<Vec<f64>>,
}

fn flags(cli: &Cli) -> serde_json::Value {
    serde_json::to_value(&cli.command).expect("arguments serialize")
}

pub(crate) fn load_scenario(path: &Path) -> anyhow::Result<(ScenarioFile, Scenario)> {
    let file = ScenarioFile::load(path).with_context(|| format!("scenario {}", path.display()))?;
    let scenario = file.to_scenario()?;
    Ok((file, scenario))
}

fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn generate(args: &GenerateArgs) -> Result<(), Failure> {
    let mut recipe = match &args.recipe {
        Some(path) => serde_json::from_str::<GenerationRecipe>(&read_text(path)?)
            .with_context(|| format!("recipe {}", path.display()))?,
        None => GenerationRecipe::default(),
    };
    if let Some(n) = args.consumers {
        recipe.consumers = n;
    }
    if let Some(h) = args.horizon {
        recipe.horizon = h;
    }
    if let Some(seed) = args.seed {
        recipe.seed = seed;
    }
    if let Some(j) = args.jitter {
        recipe.jitter = j;
    }
    let base = match &args.base {
        Some(path) => BaseInterval::load(path).map_err(anyhow::Error::from)?,
        None => BaseInterval::default_residential(),
    };
    let generated = generate_scenario(&recipe, &base).map_err(anyhow::Error::from)?;
    generated
        .to_file()
        .save(&args.out)
        .map_err(anyhow::Error::from)?;
    Ok(())
}

fn build_graph(args: &RunArgs, consumers: usize) -> anyhow::Result<CommGraph> {
    if let Some(path) = &args.graph {
        let graph = CommGraph::from_edge_list(&read_text(path)?)
            .with_context(|| format!("graph {}", path.display()))?;
        if graph.nodes() != consumers {
            bail!(
                "graph {} has {} nodes but the scenario has {consumers} consumers",
                path.display(),
                graph.nodes()
            );
        }
        if !graph.is_connected() {
            bail!("graph {} is not connected", path.display());
        }
        return Ok(graph);
    }
    let graph = match (args.topology, args.degree) {
        (Some(Topology::Random), Some(d)) => {
            generate_topology(consumers, d, &mut seeded(args.seed, TOPOLOGY_STREAM))?
        }
        (Some(Topology::Random), None) => bail!("--topology random needs --degree"),
        (Some(Topology::Complete), _) => CommGraph::complete(consumers)?,
        (Some(Topology::Path), _) => CommGraph::path(consumers)?,
        (None, _) => bail!(
            "algorithm {} needs a communication graph: pass --graph FILE or --topology random --degree D",
            args.alg
        ),
    };
    Ok(graph)
}

pub fn run(args: &RunArgs, cli: &Cli) -> Result<(), Failure> {
    let (file, scenario) = load_scenario(&args.scenario)?;
    let init = match &file.initial {
        Some(init) => init.clone(),
        None => scenario
            .sample_profiles(&mut seeded(args.seed, INITIAL_STREAM))
            .map_err(anyhow::Error::from)?,
    };
    let schedule = match args.step_constant {
        Some(value) => StepSchedule::Constant { value },
        None => StepSchedule::PowerDecay {
            exponent: args.step_exponent,
        },
    };
    let config = RunConfig {
        tol: args.tol,
        max_iter: args.max_iter,
        record_every: args.record_every,
    };
    let graph = if args.alg == 1 {
        None
    } else {
        Some(build_graph(args, scenario.consumers())?)
    };
    let outcome = match (args.alg, &graph) {
        (1, _) => run_algorithm1(&scenario, args.theta, schedule, &init, config),
        (2, Some(g)) => {
            let weights = WeightMatrix::build(g, args.tau).map_err(anyhow::Error::from)?;
            run_algorithm2(&scenario, g, &weights, schedule, &init, config)
        }
        (3, Some(g)) => {
            let events = GossipStream::new(g, seeded(args.seed, GOSSIP_STREAM)).map_err(anyhow::Error::from)?;
            let config = GossipConfig {
                tol: args.tol,
                max_events: args.max_iter,
                record_every: args.record_every,
                window: args.window,
            };
            run_algorithm3(&scenario, g, events, &init, config)
        }
        _ => unreachable!("alg is range-checked and graph built for 2 and 3"),
    };
    let (result, trace) = outcome.map_err(anyhow::Error::from)?;

    let mut csv = Vec::new();
    trace.write_csv(&mut csv).context("formatting trace")?;
    write_text(&args.trace, std::str::from_utf8(&csv).expect("trace is ASCII"))?;

    let curve = scenario.curve();
    let initial_aggregate = model::aggregate(&init);
    let final_aggregate = model::aggregate(&result.profiles);
    let verified = result.uniqueness_verified;
    let warning = (!verified).then(|| {
        format!(
            "uniqueness: unverified; price exponent {} violates the certificate bound for N = {}",
            curve.max_exponent(),
            scenario.consumers()
        )
    });
    if let Some(w) = &warning {
        eprintln!("warning: {w}");
    }
    let summary = RunSummary {
        provenance: Provenance {
            scenario_hash: file.content_hash(),
            flags: flags(cli),
        },
        algorithm: args.alg,
        converged: result.converged,
        iterations: result.iterations,
        events: (args.alg == 3).then(|| result.iterations - 1),
        residual: result.residual,
        initial_par: model::par(&initial_aggregate).map_err(anyhow::Error::from)?,
        final_par: model::par(&final_aggregate).map_err(anyhow::Error::from)?,
        initial_total_cost: model::grid_cost(&initial_aggregate, curve).map_err(anyhow::Error::from)?,
        total_cost: model::grid_cost(&final_aggregate, curve).map_err(anyhow::Error::from)?,
        uniqueness: if verified { "verified" } else { "unverified" }.to_string(),
        warning,
        final_aggregate,
        profiles: result.profiles,
    };
    write_json(&args.summary, &summary)?;

    if args.strict && !result.converged {
        return Err(Failure::Runtime(anyhow!(
            "algorithm {} did not converge: residual {:e} after {} iterations (tol {:e})",
            args.alg,
            result.residual,
            result.iterations,
            args.tol
        )));
    }
    Ok(())
}

pub fn oracle(args: &OracleArgs, cli: &Cli) -> Result<(), Failure> {
    let (file, scenario) = load_scenario(&args.scenario)?;
    let provenance = Provenance {
        scenario_hash: file.content_hash(),
        flags: flags(cli),
    };
    let output = match args.kind {
        OracleKind::Nash => {
            if scenario.consumers() > oracle::ORACLE_MAX_CONSUMERS || scenario.horizon() > oracle::ORACLE_MAX_HORIZON {
                return Err(Failure::Usage(anyhow!(
                    "nash oracle is limited to N <= {} and H <= {}; scenario has N = {} and H = {}",
                    oracle::ORACLE_MAX_CONSUMERS,
                    oracle::ORACLE_MAX_HORIZON,
                    scenario.consumers(),
                    scenario.horizon()
                )));
            }
            match oracle::nash_best_response_iteration(&scenario, args.tol, args.max_iter) {
                Ok(r) => {
                    let total_cost = model::grid_cost(&model::aggregate(&r.profiles), scenario.curve())
                        .map_err(anyhow::Error::from)?;
                    OracleOutput {
                        provenance,
                        kind: args.kind,
                        converged: true,
                        iterations: r.sweeps,
                        residual: r.residual,
                        total_cost,
                        profiles: r.profiles,
                    }
                }
                Err(e @ dsm_core::DsmError::NotConverged { .. }) => return Err(Failure::Runtime(e.into())),
                Err(e) => return Err(Failure::Usage(e.into())),
            }
        }
        OracleKind::Welfare => {
            let w = oracle::social_welfare_optimum(&scenario, args.tol, args.max_iter)
                .map_err(anyhow::Error::from)?;
            OracleOutput {
                provenance,
                kind: args.kind,
                converged: w.converged,
                iterations: w.iterations,
                residual: w.residual,
                total_cost: w.total_cost,
                profiles: w.profiles,
            }
        }
    };
    write_json(&args.out, &output)?;
    if args.strict && !output.converged {
        return Err(Failure::Runtime(anyhow!(
            "welfare optimizer did not converge: residual {:e} after {} iterations",
            output.residual,
            output.iterations
        )));
    }
    Ok(())
}

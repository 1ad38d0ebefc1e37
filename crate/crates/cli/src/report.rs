use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use dsm_core::oracle::fairness_comparison;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::commands::{load_scenario, OracleOutput, RunSummary};
use crate::{read_text, write_json, write_text, Failure, OracleKind, ReportArgs, ReportKind};

#[derive(Debug, Serialize)]
struct ParReport {
    scenario_hash: String,
    initial_par: f64,
    final_par: f64,
    /// `1 - final / initial`.
    reduction: f64,
}

#[derive(Debug, Serialize)]
struct WelfareGapReport {
    scenario_hash: String,
    equilibrium_total_cost: f64,
    optimal_total_cost: f64,
    /// `(equilibrium - optimal) / optimal`.
    relative_gap: f64,
}

fn required<'a>(path: &'a Option<PathBuf>, flag: &str, kind: &str) -> anyhow::Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| anyhow!("--kind {kind} needs --{flag}"))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    serde_json::from_str(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn same_scenario(a: &str, a_name: &str, b: &str, b_name: &str) -> anyhow::Result<()> {
    if a != b {
        bail!("scenario hash mismatch: {a_name} was computed on {a} but {b_name} on {b}; refusing to combine");
    }
    Ok(())
}

pub fn report(args: &ReportArgs) -> Result<(), Failure> {
    match args.kind {
        ReportKind::Par => {
            let summary: RunSummary = read_json(required(&args.summary, "summary", "par")?)?;
            let reduction = 1.0 - summary.final_par / summary.initial_par;
            write_json(
                &args.out,
                &ParReport {
                    scenario_hash: summary.provenance.scenario_hash,
                    initial_par: summary.initial_par,
                    final_par: summary.final_par,
                    reduction,
                },
            )?;
        }
        ReportKind::Fairness => {
            let summary_path = required(&args.summary, "summary", "fairness")?;
            let summary: RunSummary = read_json(summary_path)?;
            let scenario_path = required(&args.scenario, "scenario", "fairness")?;
            let (file, scenario) = load_scenario(scenario_path)?;
            same_scenario(
                &summary.provenance.scenario_hash,
                &summary_path.display().to_string(),
                &file.content_hash(),
                &scenario_path.display().to_string(),
            )?;
            let rows = fairness_comparison(&summary.profiles, &scenario).map_err(anyhow::Error::from)?;
            let mut out = String::from("consumer,energy,bill_instantaneous,bill_total_load,par\n");
            for r in rows {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    r.consumer + 1,
                    r.energy,
                    r.bill_instantaneous,
                    r.bill_total_load,
                    r.par
                )
                .expect("writing to a String cannot fail");
            }
            write_text(&args.out, &out)?;
        }
        ReportKind::WelfareGap => {
            let summary_path = required(&args.summary, "summary", "welfare-gap")?;
            let oracle_path = required(&args.oracle, "oracle", "welfare-gap")?;
            let summary: RunSummary = read_json(summary_path)?;
            let optimum: OracleOutput = read_json(oracle_path)?;
            if optimum.kind != OracleKind::Welfare {
                return Err(anyhow!("{} is not a welfare oracle output", oracle_path.display()).into());
            }
            same_scenario(
                &summary.provenance.scenario_hash,
                &summary_path.display().to_string(),
                &optimum.provenance.scenario_hash,
                &oracle_path.display().to_string(),
            )?;
            write_json(
                &args.out,
                &WelfareGapReport {
                    scenario_hash: summary.provenance.scenario_hash,
                    equilibrium_total_cost: summary.total_cost,
                    optimal_total_cost: optimum.total_cost,
                    relative_gap: (summary.total_cost - optimum.total_cost) / optimum.total_cost,
                },
            )?;
        }
        ReportKind::Convergence => {
            let trace_path = required(&args.trace, "trace", "convergence")?;
            let text = read_text(trace_path)?;
            write_text(&args.out, &convergence_series(&text, &args.consumers)?)?;
        }
    }
    Ok(())
}

/// Rows `t,consumer,cost` from a run trace, restricted to `consumers` when nonempty.
fn convergence_series(trace: &str, consumers: &[usize]) -> anyhow::Result<String> {
    let keep: BTreeSet<usize> = consumers.iter().copied().collect();
    let mut lines = trace.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.starts_with("t,n,cost,residual") => {}
        _ => bail!("trace does not start with the `t,n,cost,residual,...` header"),
    }
    let mut out = String::from("t,consumer,cost\n");
    for (i, line) in lines {
        let mut fields = line.split(',');
        let mut next = |name: &str| {
            fields
                .next()
                .ok_or_else(|| anyhow!("trace line {}: missing {name}", i + 1))
        };
        let t: usize = next("t")?.parse().with_context(|| format!("trace line {}: bad t", i + 1))?;
        let n: usize = next("n")?.parse().with_context(|| format!("trace line {}: bad n", i + 1))?;
        let cost: f64 = next("cost")?
            .parse()
            .with_context(|| format!("trace line {}: bad cost", i + 1))?;
        if keep.is_empty() || keep.contains(&n) {
            writeln!(out, "{t},{n},{cost}").expect("writing to a String cannot fail");
        }
    }
    Ok(out)
}

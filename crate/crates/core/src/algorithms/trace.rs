use std::io::{self, Write};

use super::Scenario;
use crate::model;
use crate::network::GossipEvent;

/// Snapshot of the full state at iteration `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: usize,
    pub profiles: Vec<Vec<f64>>,
    /// Average-consumption estimates (consensus and gossip runs only).
    pub estimates: Option<Vec<Vec<f64>>>,
    /// Instantaneous-load bill of every consumer at this state.
    pub costs: Vec<f64>,
    pub aggregate: Vec<f64>,
    /// Most recent natural-map residual reading.
    pub residual: f64,
}

/// Everything a run produced, for analysis and invariant checks.
///
/// The two error series hold one entry per iteration regardless of
/// `record_every`: entry `t - 1` belongs to iteration `t`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    /// `max_h |sum_n est_n^h - sum_n q_n^h|`; all zeros for the central algorithm.
    pub conservation_error: Vec<f64>,
    /// `max_n |sum_h q_n^h - E_n|`.
    pub budget_error: Vec<f64>,
    /// Gossip events in the order they were applied.
    pub events: Vec<GossipEvent>,
}

impl RunTrace {
    pub fn final_record(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// `(t, bill)` of one consumer across recorded snapshots.
    pub fn cost_series(&self, consumer: usize) -> Vec<(usize, f64)> {
        self.records
            .iter()
            .map(|r| (r.t, r.costs[consumer]))
            .collect()
    }

    /// CSV with header `t,n,cost,residual,q1..qH`, one row per snapshot per consumer.
    /// `n` is 1-based.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let horizon = self
            .records
            .first()
            .and_then(|r| r.profiles.first())
            .map_or(0, Vec::len);
        write!(out, "t,n,cost,residual")?;
        for h in 1..=horizon {
            write!(out, ",q{h}")?;
        }
        writeln!(out)?;
        for r in &self.records {
            for (n, q) in r.profiles.iter().enumerate() {
                write!(out, "{},{},{},{}", r.t, n + 1, r.costs[n], r.residual)?;
                for x in q {
                    write!(out, ",{x}")?;
                }
                writeln!(out)?;
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }
}

pub(crate) struct Recorder<'s> {
    scenario: &'s Scenario,
    every: usize,
    pub trace: RunTrace,
}

impl<'s> Recorder<'s> {
    pub fn new(scenario: &'s Scenario, every: usize) -> Self {
        Self {
            scenario,
            every,
            trace: RunTrace::default(),
        }
    }

    /// Invariant diagnostics for every iteration; a snapshot when `t` is on the stride.
    pub fn observe(
        &mut self,
        t: usize,
        profiles: &[Vec<f64>],
        aggregate: &[f64],
        estimates: Option<&[Vec<f64>]>,
        residual: f64,
    ) {
        let budget_error = profiles
            .iter()
            .zip(self.scenario.specs())
            .map(|(q, s)| (q.iter().sum::<f64>() - s.energy).abs())
            .fold(0.0, f64::max);
        self.trace.budget_error.push(budget_error);
        let conservation = match estimates {
            Some(est) => {
                let est_sum = model::aggregate(est);
                let q_sum = model::aggregate(profiles);
                est_sum
                    .iter()
                    .zip(&q_sum)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            }
            None => 0.0,
        };
        self.trace.conservation_error.push(conservation);

        let on_stride = (t - 1).is_multiple_of(self.every);
        let already = self.trace.records.last().is_some_and(|r| r.t == t);
        if on_stride && !already {
            let curve = self.scenario.curve();
            self.trace.records.push(TraceRecord {
                t,
                profiles: profiles.to_vec(),
                estimates: estimates.map(<[Vec<f64>]>::to_vec),
                costs: profiles
                    .iter()
                    .map(|q| model::bill_unchecked(q, aggregate, curve))
                    .collect(),
                aggregate: aggregate.to_vec(),
                residual,
            });
        }
    }

    /// Snapshot of the final state without re-counting its diagnostics.
    pub fn finish(
        &mut self,
        t: usize,
        profiles: &[Vec<f64>],
        aggregate: &[f64],
        estimates: Option<&[Vec<f64>]>,
        residual: f64,
    ) {
        if let Some(last) = self.trace.records.last_mut() {
            if last.t == t {
                last.residual = residual;
                return;
            }
        }
        let curve = self.scenario.curve();
        self.trace.records.push(TraceRecord {
            t,
            profiles: profiles.to_vec(),
            estimates: estimates.map(<[Vec<f64>]>::to_vec),
            costs: profiles
                .iter()
                .map(|q| model::bill_unchecked(q, aggregate, curve))
                .collect(),
            aggregate: aggregate.to_vec(),
            residual,
        });
    }
}

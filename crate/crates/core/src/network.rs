//! Consumer communication topology, doubly stochastic mixing weights, and the
//! gossip event stream driven by a single rate-N virtual Poisson clock.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{DsmError, Result};

/// Undirected simple graph over consumers `0..N`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommGraph {
    nodes: usize,
    edges: BTreeSet<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl CommGraph {
    /// Structural checks only (range, self-loops, duplicates); see [`CommGraph::connected`].
    pub fn new(nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if nodes == 0 {
            return Err(DsmError::arg("graph needs at least one node"));
        }
        let mut set = BTreeSet::new();
        for &(u, v) in edges {
            if u >= nodes || v >= nodes {
                return Err(DsmError::arg(format!(
                    "edge ({u}, {v}) out of range for {nodes} nodes"
                )));
            }
            if u == v {
                return Err(DsmError::arg(format!("self-loop at node {u}")));
            }
            if !set.insert((u.min(v), u.max(v))) {
                return Err(DsmError::arg(format!("duplicate edge ({u}, {v})")));
            }
        }
        let mut neighbors = vec![Vec::new(); nodes];
        for &(u, v) in &set {
            neighbors[u].push(v);
            neighbors[v].push(u);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Self {
            nodes,
            edges: set,
            neighbors,
        })
    }

    /// Like [`CommGraph::new`] but also rejects disconnected graphs.
    pub fn connected(nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let g = Self::new(nodes, edges)?;
        if !g.is_connected() {
            return Err(DsmError::Disconnected);
        }
        Ok(g)
    }

    pub fn complete(nodes: usize) -> Result<Self> {
        let edges: Vec<_> = (0..nodes)
            .flat_map(|u| (u + 1..nodes).map(move |v| (u, v)))
            .collect();
        Self::new(nodes, &edges)
    }

    pub fn path(nodes: usize) -> Result<Self> {
        let edges: Vec<_> = (1..nodes).map(|v| (v - 1, v)).collect();
        Self::new(nodes, &edges)
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.contains(&(u.min(v), u.max(v)))
    }

    pub fn neighbors(&self, n: usize) -> &[usize] {
        &self.neighbors[n]
    }

    pub fn degree(&self, n: usize) -> usize {
        self.neighbors[n].len()
    }

    pub fn max_degree(&self) -> usize {
        self.neighbors.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn mean_degree(&self) -> f64 {
        2.0 * self.edges.len() as f64 / self.nodes as f64
    }

    /// Breadth-first reachability from node 0.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.nodes];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut reached = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.neighbors[u] {
                if !seen[v] {
                    seen[v] = true;
                    reached += 1;
                    queue.push_back(v);
                }
            }
        }
        reached == self.nodes
    }

    /// Edge-list text: a `# nodes N` header, then one 1-indexed `n k` pair per line.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("# nodes {}\n", self.nodes);
        for (u, v) in self.edges() {
            let _ = writeln!(out, "{} {}", u + 1, v + 1);
        }
        out
    }

    /// Parses the edge-list format. Without a `# nodes N` header the node count
    /// is the largest index seen.
    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut declared = None;
        let mut edges = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = i + 1;
            let parse_err = |message: String| DsmError::Parse {
                location: format!("line {lineno}"),
                message,
            };
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                let mut words = comment.split_whitespace();
                if words.next() == Some("nodes") {
                    let n = words
                        .next()
                        .and_then(|w| w.parse::<usize>().ok())
                        .ok_or_else(|| parse_err("malformed `# nodes N` header".into()))?;
                    declared = Some(n);
                }
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(parse_err(format!("expected `n k`, got {line:?}")));
            }
            let mut ends = [0usize; 2];
            for (slot, field) in ends.iter_mut().zip(&fields) {
                let idx: usize = field
                    .parse()
                    .map_err(|_| parse_err(format!("bad node index {field:?}")))?;
                if idx == 0 {
                    return Err(parse_err("node indices are 1-based".into()));
                }
                *slot = idx - 1;
            }
            edges.push((ends[0], ends[1]));
        }
        let seen = edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0);
        let nodes = declared.unwrap_or(seen);
        if nodes < seen {
            return Err(DsmError::Parse {
                location: "header".into(),
                message: format!("declares {nodes} nodes but edges reference node {seen}"),
            });
        }
        Self::new(nodes, &edges)
    }
}

/// Random spanning tree over a shuffled node order, then uniformly random extra
/// edges until the mean degree reaches `target_degree` (capped at `N - 1`).
pub fn generate_topology<R: Rng + ?Sized>(
    nodes: usize,
    target_degree: f64,
    rng: &mut R,
) -> Result<CommGraph> {
    if nodes < 2 {
        return Err(DsmError::arg("topology needs at least two nodes"));
    }
    let mut order: Vec<usize> = (0..nodes).collect();
    order.shuffle(rng);
    let mut edges = BTreeSet::new();
    for i in 1..nodes {
        let parent = order[rng.gen_range(0..i)];
        let child = order[i];
        edges.insert((parent.min(child), parent.max(child)));
    }
    let max_edges = nodes * (nodes - 1) / 2;
    let wanted = ((target_degree.max(0.0) * nodes as f64 / 2.0).ceil() as usize).min(max_edges);
    while edges.len() < wanted {
        let u = rng.gen_range(0..nodes);
        let v = rng.gen_range(0..nodes);
        if u != v {
            edges.insert((u.min(v), u.max(v)));
        }
    }
    let edges: Vec<_> = edges.into_iter().collect();
    CommGraph::connected(nodes, &edges)
}

/// Dense `N x N` mixing matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    size: usize,
    w: Vec<f64>,
}

impl WeightMatrix {
    /// `w_{n,k} = tau / max_degree` on edges, `w_{n,n} = 1 - deg(n) tau / max_degree`.
    pub fn build(graph: &CommGraph, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(DsmError::arg(format!("tau must lie in (0, 1), got {tau}")));
        }
        let size = graph.nodes();
        let mut w = vec![0.0; size * size];
        let max_deg = graph.max_degree();
        if max_deg == 0 {
            // single node
            for n in 0..size {
                w[n * size + n] = 1.0;
            }
            return Ok(Self { size, w });
        }
        let off = tau / max_deg as f64;
        for n in 0..size {
            for &k in graph.neighbors(n) {
                w[n * size + k] = off;
            }
            w[n * size + n] = 1.0 - graph.degree(n) as f64 * off;
        }
        Ok(Self { size, w })
    }

    /// Arbitrary weights, checked against the graph's sparsity pattern and double stochasticity.
    pub fn from_rows(graph: &CommGraph, rows: Vec<Vec<f64>>) -> Result<Self> {
        let size = graph.nodes();
        DsmError::check_len("weight rows", size, rows.len())?;
        let mut w = Vec::with_capacity(size * size);
        for row in rows {
            DsmError::check_len("weight row", size, row.len())?;
            w.extend(row);
        }
        let m = Self { size, w };
        m.check(graph, 1e-12)?;
        Ok(m)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, n: usize, k: usize) -> f64 {
        self.w[n * self.size + k]
    }

    pub fn row_sum(&self, n: usize) -> f64 {
        self.w[n * self.size..(n + 1) * self.size].iter().sum()
    }

    pub fn column_sum(&self, k: usize) -> f64 {
        (0..self.size).map(|n| self.get(n, k)).sum()
    }

    /// Nonnegativity, graph support, and unit row/column sums within `tol`.
    pub fn check(&self, graph: &CommGraph, tol: f64) -> Result<()> {
        if graph.nodes() != self.size {
            return Err(DsmError::LengthMismatch {
                what: "weight matrix",
                expected: graph.nodes(),
                got: self.size,
            });
        }
        for n in 0..self.size {
            for k in 0..self.size {
                let w = self.get(n, k);
                if !(w >= 0.0) {
                    return Err(DsmError::arg(format!("negative weight at ({n}, {k})")));
                }
                if n != k && w != 0.0 && !graph.has_edge(n, k) {
                    return Err(DsmError::arg(format!(
                        "nonzero weight at ({n}, {k}) without an edge"
                    )));
                }
            }
            if (self.row_sum(n) - 1.0).abs() > tol {
                return Err(DsmError::arg(format!("row {n} does not sum to 1")));
            }
            if (self.column_sum(n) - 1.0).abs() > tol {
                return Err(DsmError::arg(format!("column {n} does not sum to 1")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GossipEvent {
    pub t: usize,
    pub initiator: usize,
    pub contact: usize,
}

/// Infinite i.i.d. event sequence: initiator uniform over all nodes, contact
/// uniform over the initiator's neighbors. Event indices start at 1.
pub struct GossipStream<'g, R> {
    graph: &'g CommGraph,
    rng: R,
    t: usize,
}

impl<'g, R: Rng> GossipStream<'g, R> {
    pub fn new(graph: &'g CommGraph, rng: R) -> Result<Self> {
        if !graph.is_connected() || graph.nodes() < 2 {
            return Err(DsmError::Disconnected);
        }
        Ok(Self { graph, rng, t: 0 })
    }
}

impl<R: Rng> Iterator for GossipStream<'_, R> {
    type Item = GossipEvent;

    fn next(&mut self) -> Option<GossipEvent> {
        self.t += 1;
        let initiator = self.rng.gen_range(0..self.graph.nodes());
        let nbrs = self.graph.neighbors(initiator);
        let contact = nbrs[self.rng.gen_range(0..nbrs.len())];
        Some(GossipEvent {
            t: self.t,
            initiator,
            contact,
        })
    }
}

pub fn gossip_stream<R: Rng>(graph: &CommGraph, rng: R, count: usize) -> Result<Vec<GossipEvent>> {
    if count == 0 {
        return Err(DsmError::arg("event count must be positive"));
    }
    Ok(GossipStream::new(graph, rng)?.take(count).collect())
}

//! Proportional-sharing carbon tracing over a condensed flow graph.
//!
//! Nodes are visited in Kahn order. A node's generator mix (GNDF row) is the
//! flow-weighted average of the mixes arriving on its inflow edges, and every
//! outflow edge carries the node's mix unchanged (its GLDF row). A virtual
//! source's mix is itself. The locational average emission rate of a node is
//! its mix dotted with the sources' emission rates.

mod lme;
mod output;

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::flowgraph::Source;
use crate::model::{EmissionTable, ModelError};
use crate::scc::{CondensedGraph, SccPartition};

pub use lme::{lme, LmeOptions, LmeResult};
pub use output::{trace_document, BusTrace, LineTrace, TraceDocument, TraceMetadata};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("node \"{node}\" has {demand} MW demand but is not reached by any source")]
    Unreached { node: String, demand: f64 },
    #[error("{remaining} nodes left after topological sweep; graph is not acyclic")]
    Cycle { remaining: usize },
    #[error("unknown bus \"{0}\"")]
    UnknownBus(String),
    #[error("partition does not match the traced graph")]
    PartitionMismatch,
    #[error("load at bus \"{0}\" is unchanged between the snapshots")]
    DegeneratePerturbation(String),
    #[error("loads differ at several buses: {0:?}")]
    MultiPerturbation(Vec<String>),
    #[error("snapshots do not share a network ({0})")]
    SnapshotMismatch(&'static str),
}

/// Pop order among simultaneously ready nodes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TieBreak {
    /// FIFO queue seeded with ready nodes in id order.
    #[default]
    Fifo,
    /// Uniformly random ready node, seeded.
    Shuffled(u64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceOptions {
    /// Mix fractions below this are dropped and the rest renormalised.
    pub drop_below: f64,
    pub tie_break: TieBreak,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            drop_below: 1e-12,
            tie_break: TieBreak::Fifo,
        }
    }
}

/// Locational average emission rate of one bus.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Lae {
    /// Bus with positive demand.
    Served(f64),
    /// Zero-demand bus that power flows through; the rate is its mix.
    Transit(f64),
    /// Nothing flows into the bus.
    Undefined,
}

impl Lae {
    pub fn rate(&self) -> Option<f64> {
        match *self {
            Lae::Served(r) | Lae::Transit(r) => Some(r),
            Lae::Undefined => None,
        }
    }

    pub fn status(&self) -> &'static str {
        match self {
            Lae::Served(_) => "served",
            Lae::Transit(_) => "transit",
            Lae::Undefined => "undefined",
        }
    }
}

/// One sparse mix entry: (source index, fraction).
pub type MixEntry = (u32, f64);

/// Sparse GNDF rows for every condensed node plus derived rates.
#[derive(Debug)]
pub struct TraceResult<'a> {
    graph: &'a CondensedGraph,
    source_rates: Vec<f64>,
    rows: Vec<(u32, u32)>,
    entries: Vec<MixEntry>,
    rates: Vec<f64>,
    order: Vec<u32>,
}

/// Traces with default options.
pub fn trace<'a>(g: &'a CondensedGraph, table: &EmissionTable) -> Result<TraceResult<'a>, TraceError> {
    trace_with(g, table, &TraceOptions::default())
}

enum Ready {
    Fifo(VecDeque<usize>),
    Shuffled(Vec<usize>, ChaCha8Rng),
}

impl Ready {
    fn push(&mut self, v: usize) {
        match self {
            Ready::Fifo(q) => q.push_back(v),
            Ready::Shuffled(bag, _) => bag.push(v),
        }
    }

    fn pop(&mut self) -> Option<usize> {
        match self {
            Ready::Fifo(q) => q.pop_front(),
            Ready::Shuffled(bag, rng) => {
                if bag.is_empty() {
                    None
                } else {
                    let k = rng.gen_range(0..bag.len());
                    Some(bag.swap_remove(k))
                }
            }
        }
    }
}

pub fn trace_with<'a>(
    g: &'a CondensedGraph,
    table: &EmissionTable,
    opts: &TraceOptions,
) -> Result<TraceResult<'a>, TraceError> {
    let n = g.node_count();
    let sources = g.base().sources();
    let source_rates = sources
        .iter()
        .map(|s| table.resolve(&s.fuel, s.rate_override))
        .collect::<Result<Vec<_>, _>>()?;

    let mut indeg: Vec<u32> = (0..n).map(|v| g.in_edges(v).len() as u32).collect();
    let mut ready = match opts.tie_break {
        TieBreak::Fifo => Ready::Fifo(VecDeque::new()),
        TieBreak::Shuffled(seed) => Ready::Shuffled(Vec::new(), ChaCha8Rng::seed_from_u64(seed)),
    };
    for v in (0..n).filter(|&v| indeg[v] == 0) {
        ready.push(v);
    }

    let edges = g.edges();
    let mut rows = vec![(0u32, 0u32); n];
    let mut entries: Vec<MixEntry> = Vec::with_capacity(n + sources.len());
    let mut rates = vec![f64::NAN; n];
    let mut order = Vec::with_capacity(n);
    let mut weight = vec![0.0f64; sources.len()];
    let mut marked = vec![false; sources.len()];
    let mut touched: Vec<u32> = Vec::new();

    while let Some(v) = ready.pop() {
        order.push(v as u32);
        let start = entries.len() as u32;
        let inflow = g.in_edges(v);
        if let Some(s) = g.source_index(v) {
            entries.push((s as u32, 1.0));
            rates[v] = source_rates[s];
        } else if let [e] = inflow {
            // a single inflow edge carries the tail's mix unchanged
            let tail = edges[*e].src;
            if rows[tail].1 > 0 && edges[*e].flow > 0.0 {
                rows[v] = rows[tail];
                rates[v] = rates[tail];
            } else if g.demand(v) > 0.0 {
                return Err(TraceError::Unreached {
                    node: g.label(v),
                    demand: g.demand(v),
                });
            }
        } else {
            let mut total = 0.0;
            for &e in inflow {
                let edge = edges[e];
                total += edge.flow;
                let (a, len) = rows[edge.src];
                for &(s, frac) in &entries[a as usize..(a + len) as usize] {
                    if !marked[s as usize] {
                        marked[s as usize] = true;
                        touched.push(s);
                    }
                    weight[s as usize] += edge.flow * frac;
                }
            }
            if total > 0.0 && !touched.is_empty() {
                touched.sort_unstable();
                let cutoff = opts.drop_below * total;
                let kept: f64 = touched
                    .iter()
                    .map(|&s| weight[s as usize])
                    .filter(|&w| w >= cutoff)
                    .sum();
                let mut rate = 0.0;
                for &s in &touched {
                    let w = weight[s as usize];
                    if w >= cutoff {
                        let frac = w / kept;
                        entries.push((s, frac));
                        rate += frac * source_rates[s as usize];
                    }
                }
                rates[v] = rate;
            } else if g.demand(v) > 0.0 {
                return Err(TraceError::Unreached {
                    node: g.label(v),
                    demand: g.demand(v),
                });
            }
            for &s in &touched {
                weight[s as usize] = 0.0;
                marked[s as usize] = false;
            }
            touched.clear();
        }
        if entries.len() as u32 > start {
            rows[v] = (start, entries.len() as u32 - start);
        }

        for &e in g.out_edges(v) {
            let w = edges[e].dst;
            indeg[w] -= 1;
            if indeg[w] == 0 {
                ready.push(w);
            }
        }
    }

    if order.len() < n {
        return Err(TraceError::Cycle {
            remaining: n - order.len(),
        });
    }
    Ok(TraceResult {
        graph: g,
        source_rates,
        rows,
        entries,
        rates,
        order,
    })
}

impl<'a> TraceResult<'a> {
    pub fn graph(&self) -> &'a CondensedGraph {
        self.graph
    }

    pub fn sources(&self) -> &'a [Source] {
        self.graph.base().sources()
    }

    /// Emission rate of source `s` (t/MWh).
    pub fn source_rate(&self, s: usize) -> f64 {
        self.source_rates[s]
    }

    /// Condensed node ids in the order they were processed.
    pub fn order(&self) -> &[u32] {
        &self.order
    }

    /// GNDF row of condensed node `v`.
    pub fn node_mix(&self, v: usize) -> &[MixEntry] {
        let (a, len) = self.rows[v];
        &self.entries[a as usize..(a + len) as usize]
    }

    /// Mix rate of condensed node `v`, `None` when nothing flows in.
    pub fn node_rate(&self, v: usize) -> Option<f64> {
        let r = self.rates[v];
        (!r.is_nan()).then_some(r)
    }

    /// GNDF row of bus `b` (its supernode's row).
    pub fn bus_mix(&self, b: usize) -> &[MixEntry] {
        self.node_mix(self.graph.supernode_of(b))
    }

    /// GLDF row of base edge `e`: the mix at its tail.
    pub fn edge_mix(&self, e: usize) -> &[MixEntry] {
        let tail = self.graph.base().edges()[e].src;
        self.node_mix(self.graph.partition().component_of(tail))
    }

    /// Mix of node `v` recomputed from its outflow edges instead of its
    /// inflow edges; `None` for nodes without outflow.
    pub fn outflow_mix(&self, v: usize) -> Option<Vec<MixEntry>> {
        let g = self.graph;
        let total = g.outflow(v);
        if total <= 0.0 {
            return None;
        }
        let mut acc = std::collections::BTreeMap::<u32, f64>::new();
        for &e in g.out_edges(v) {
            let edge = g.edges()[e];
            // an outflow edge's GLDF row is the mix at its tail, v
            for &(s, frac) in self.node_mix(edge.src) {
                *acc.entry(s).or_default() += edge.flow * frac;
            }
        }
        Some(acc.into_iter().map(|(s, w)| (s, w / total)).collect())
    }

    pub fn bus_index(&self, id: &str) -> Result<usize, TraceError> {
        self.graph
            .base()
            .bus_idx(id)
            .ok_or_else(|| TraceError::UnknownBus(id.to_string()))
    }

    /// Effective demand d_b of bus `b`.
    pub fn bus_demand(&self, b: usize) -> f64 {
        self.graph.base().demand(b)
    }

    pub fn bus_demands(&self) -> &'a [f64] {
        self.graph.base().demands()
    }

    pub fn lae_at(&self, b: usize) -> Lae {
        match self.node_rate(self.graph.supernode_of(b)) {
            None => Lae::Undefined,
            Some(r) if self.bus_demand(b) > 0.0 => Lae::Served(r),
            Some(r) => Lae::Transit(r),
        }
    }

    /// LAE of the bus with id `bus`.
    pub fn lae(&self, bus: &str) -> Result<Lae, TraceError> {
        Ok(self.lae_at(self.bus_index(bus)?))
    }

    /// LAE of every bus, in network order.
    pub fn lae_vector(&self) -> Vec<(&'a str, Lae)> {
        let ids = self.graph.base().bus_ids();
        ids.iter().enumerate().map(|(b, id)| (id.as_str(), self.lae_at(b))).collect()
    }

    /// MW of bus `b`'s demand attributed to each source.
    pub fn contributions(&self, b: usize) -> Vec<(&'a Source, f64)> {
        let d = self.bus_demand(b);
        let sources = self.sources();
        self.bus_mix(b)
            .iter()
            .map(|&(s, frac)| (&sources[s as usize], frac * d))
            .collect()
    }
}

/// Gives every member bus its supernode's rate; `None` where undefined.
pub fn expand_scc(t: &TraceResult<'_>, p: &SccPartition) -> Result<Vec<Option<f64>>, TraceError> {
    let g = t.graph();
    if p != g.partition() {
        return Err(TraceError::PartitionMismatch);
    }
    Ok((0..g.base().bus_count())
        .map(|b| t.node_rate(p.component_of(b)))
        .collect())
}

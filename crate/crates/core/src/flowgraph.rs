//! Directed flow graph of a snapshot.
//!
//! Lines are oriented along their flow, lines carrying less than `eps` are
//! dropped, and every dispatching generator becomes a virtual source node
//! with a single edge into its bus. Each bus then satisfies
//! `Σ inflow = Σ outflow + demand`, where demand is the declared load plus
//! whatever the [`LossPolicy`] assigns to it.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::sync::OnceLock;

use serde::Serialize;
use thiserror::Error;

use crate::graph::Csr;
use crate::model::{
    reconcile_dual_end_flows, FuelType, ModelError, Network, Snapshot, Tolerance,
};

/// What to do with a bus whose supply and use disagree.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum LossPolicy {
    /// Any residual beyond tolerance is an error.
    Strict,
    /// Surplus inflow (line loss) becomes demand at the bus; a deficit is an error.
    #[default]
    AbsorbAsDemand,
    /// As `AbsorbAsDemand`, and a deficit is covered by a virtual source of
    /// the given fuel.
    SlackSource { fuel: FuelType },
}

impl fmt::Display for LossPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossPolicy::Strict => f.write_str("strict"),
            LossPolicy::AbsorbAsDemand => f.write_str("absorb"),
            LossPolicy::SlackSource { fuel } => write!(f, "slack:{fuel}"),
        }
    }
}

impl FromStr for LossPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "strict" => Ok(LossPolicy::Strict),
            None if s == "absorb" => Ok(LossPolicy::AbsorbAsDemand),
            None if s == "slack" => Ok(LossPolicy::SlackSource {
                fuel: FuelType::OtherImport,
            }),
            Some(("slack", fuel)) if !fuel.is_empty() => {
                let Ok(fuel) = fuel.parse();
                Ok(LossPolicy::SlackSource { fuel })
            }
            _ => Err(format!("unknown loss policy \"{s}\" (expected strict, absorb or slack:<fuel>)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrientOptions {
    /// Lines with |flow| below this many MW are dropped.
    pub eps: f64,
    pub policy: LossPolicy,
    pub tol: Tolerance,
}

impl Default for OrientOptions {
    fn default() -> Self {
        Self {
            eps: 1e-6,
            policy: LossPolicy::default(),
            tol: Tolerance::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum FlowGraphError {
    #[error("bus \"{bus}\" is out of balance by {residual} MW (bound {bound})")]
    Imbalance { bus: String, residual: f64, bound: f64 },
    #[error("bus \"{bus}\" has {demand} MW demand but no inflow or generation")]
    Infeasible { bus: String, demand: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Generator,
    NegativeLoad,
    Slack,
}

/// A virtual source node feeding one bus.
#[derive(Clone, Debug, PartialEq)]
pub struct Source {
    pub id: String,
    pub bus: usize,
    pub fuel: FuelType,
    pub rate_override: Option<f64>,
    pub mw: f64,
    pub kind: SourceKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeOrigin {
    /// Index into the graph's line ids.
    Line(usize),
    /// Index into the graph's sources.
    Source(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub flow: f64,
    pub origin: EdgeOrigin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeRef<'a> {
    Bus(&'a str),
    Source(&'a str),
}

impl fmt::Display for NodeRef<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeRef::Bus(id) => f.write_str(id),
            NodeRef::Source(id) => write!(f, "gen:{id}"),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Degree {
    pub in_deg: usize,
    pub out_deg: usize,
}

/// Flow-oriented graph. Nodes `0..bus_count()` are buses in network order,
/// followed by one node per virtual source.
#[derive(Debug)]
pub struct DirectedFlowGraph {
    bus_ids: Vec<String>,
    line_ids: Vec<String>,
    sources: Vec<Source>,
    edges: Vec<Edge>,
    demand: Vec<f64>,
    declared: Vec<f64>,
    deficit: Vec<f64>,
    outgoing: Csr,
    incoming: Csr,
    eps: f64,
    policy: LossPolicy,
    bus_lookup: OnceLock<HashMap<String, usize>>,
}

impl DirectedFlowGraph {
    pub fn bus_count(&self) -> usize {
        self.bus_ids.len()
    }

    pub fn source_count(&self) -> usize {
        self.sources.len()
    }

    pub fn node_count(&self) -> usize {
        self.bus_ids.len() + self.sources.len()
    }

    pub fn bus_ids(&self) -> &[String] {
        &self.bus_ids
    }

    pub fn line_id(&self, k: usize) -> &str {
        &self.line_ids[k]
    }

    pub fn sources(&self) -> &[Source] {
        &self.sources
    }

    /// Source behind node `v`, if `v` is a virtual source.
    pub fn source_at(&self, v: usize) -> Option<&Source> {
        v.checked_sub(self.bus_ids.len()).and_then(|s| self.sources.get(s))
    }

    pub fn source_node(&self, s: usize) -> usize {
        self.bus_ids.len() + s
    }

    pub fn node(&self, v: usize) -> NodeRef<'_> {
        match self.source_at(v) {
            Some(s) => NodeRef::Source(&s.id),
            None => NodeRef::Bus(&self.bus_ids[v]),
        }
    }

    pub fn bus_idx(&self, id: &str) -> Option<usize> {
        self.bus_lookup
            .get_or_init(|| self.bus_ids.iter().enumerate().map(|(i, b)| (b.clone(), i)).collect())
            .get(id)
            .copied()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Indices of edges leaving `v`.
    pub fn out_edges(&self, v: usize) -> &[usize] {
        self.outgoing.row(v)
    }

    /// Indices of edges entering `v`.
    pub fn in_edges(&self, v: usize) -> &[usize] {
        self.incoming.row(v)
    }

    pub fn inflow(&self, v: usize) -> f64 {
        self.in_edges(v).iter().map(|&e| self.edges[e].flow).sum()
    }

    pub fn outflow(&self, v: usize) -> f64 {
        self.out_edges(v).iter().map(|&e| self.edges[e].flow).sum()
    }

    /// Effective demand d_i at node `v` (zero for sources).
    pub fn demand(&self, v: usize) -> f64 {
        self.demand.get(v).copied().unwrap_or(0.0)
    }

    pub fn demands(&self) -> &[f64] {
        &self.demand
    }

    /// Declared load plus charged line loss at bus `b`.
    pub fn declared_load(&self, b: usize) -> f64 {
        self.declared[b]
    }

    /// Demand added by the loss policy at bus `b` (`d_b − declared_b`).
    pub fn loss_residual(&self, b: usize) -> f64 {
        self.demand[b] - self.declared[b]
    }

    /// Tolerated excess of outflow over inflow at bus `b`, clamped out of
    /// its demand.
    pub fn deficit(&self, b: usize) -> f64 {
        self.deficit[b]
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn policy(&self) -> &LossPolicy {
        &self.policy
    }

    /// Graphviz rendering for visual inspection.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph flow {\n");
        for v in 0..self.node_count() {
            let shape = if self.source_at(v).is_some() { "box" } else { "ellipse" };
            let _ = writeln!(out, "  {:?} [shape={shape}];", self.node(v).to_string());
        }
        for e in &self.edges {
            let _ = writeln!(
                out,
                "  {:?} -> {:?} [label=\"{}\"];",
                self.node(e.src).to_string(),
                self.node(e.dst).to_string(),
                crate::numfmt::sig9(e.flow)
            );
        }
        out.push_str("}\n");
        out
    }
}

/// In/out degree of every node, indexed like the graph's nodes.
pub fn degree_tables(g: &DirectedFlowGraph) -> Vec<Degree> {
    (0..g.node_count())
        .map(|v| Degree {
            in_deg: g.in_edges(v).len(),
            out_deg: g.out_edges(v).len(),
        })
        .collect()
}

struct Parts {
    bus_ids: Vec<String>,
    line_ids: Vec<String>,
    sources: Vec<Source>,
    edges: Vec<Edge>,
    declared: Vec<f64>,
}

impl Parts {
    /// Balances every bus under `policy`, appending slack sources as needed.
    fn balance(mut self, tol: &Tolerance, eps: f64, policy: LossPolicy) -> Result<DirectedFlowGraph, FlowGraphError> {
        let n = self.bus_ids.len();
        let mut supply = vec![0.0; n];
        let mut used = vec![0.0; n];
        for e in &self.edges {
            if e.dst < n {
                supply[e.dst] += e.flow;
            }
            if e.src < n {
                used[e.src] += e.flow;
            }
        }

        let mut demand = vec![0.0; n];
        let mut deficit = vec![0.0; n];
        for b in 0..n {
            let load = self.declared[b];
            let residual = supply[b] - used[b] - load;
            let bound = tol.bound(supply[b].max(used[b] + load));
            if supply[b] == 0.0 && load > bound {
                return Err(FlowGraphError::Infeasible {
                    bus: self.bus_ids[b].clone(),
                    demand: load,
                });
            }
            let imbalance = || FlowGraphError::Imbalance {
                bus: self.bus_ids[b].clone(),
                residual,
                bound,
            };
            match &policy {
                LossPolicy::Strict if residual.abs() > bound => return Err(imbalance()),
                LossPolicy::AbsorbAsDemand if residual < -bound => return Err(imbalance()),
                LossPolicy::SlackSource { fuel } if residual < -bound => {
                    let s = self.sources.len();
                    self.sources.push(Source {
                        id: format!("{}:slack", self.bus_ids[b]),
                        bus: b,
                        fuel: fuel.clone(),
                        rate_override: None,
                        mw: -residual,
                        kind: SourceKind::Slack,
                    });
                    self.edges.push(Edge {
                        src: usize::MAX, // renumbered below
                        dst: b,
                        flow: -residual,
                        origin: EdgeOrigin::Source(s),
                    });
                    supply[b] += -residual;
                }
                _ => {}
            }
            let raw = supply[b] - used[b];
            demand[b] = raw.max(0.0);
            deficit[b] = (-raw).max(0.0);
        }

        // source node ids depend on the final bus count only
        for e in &mut self.edges {
            if let EdgeOrigin::Source(s) = e.origin {
                e.src = n + s;
            }
        }
        Ok(self.finish(demand, deficit, eps, policy))
    }

    fn finish(self, demand: Vec<f64>, deficit: Vec<f64>, eps: f64, policy: LossPolicy) -> DirectedFlowGraph {
        let nodes = self.bus_ids.len() + self.sources.len();
        let outgoing = Csr::group(nodes, self.edges.iter().enumerate().map(|(k, e)| (e.src, k)));
        let incoming = Csr::group(nodes, self.edges.iter().enumerate().map(|(k, e)| (e.dst, k)));
        DirectedFlowGraph {
            bus_ids: self.bus_ids,
            line_ids: self.line_ids,
            sources: self.sources,
            edges: self.edges,
            demand,
            declared: self.declared,
            deficit,
            outgoing,
            incoming,
            eps,
            policy,
            bus_lookup: OnceLock::new(),
        }
    }
}

/// Orients a snapshot into a [`DirectedFlowGraph`].
///
/// Dual-end line flows are reconciled first (loss charged to the receiving
/// bus). Edges are ordered: generator sources in network order, negative-load
/// sources, lines in network order, then any slack sources.
pub fn orient(net: &Network, snap: &Snapshot, opts: &OrientOptions) -> Result<DirectedFlowGraph, FlowGraphError> {
    let reconciled;
    let snap = if snap.has_dual_end_flows() {
        reconciled = reconcile_dual_end_flows(net, snap, &opts.tol)?;
        &reconciled
    } else {
        snap
    };

    let n = net.buses().len();
    let mut sources = Vec::new();
    for (g, &p) in snap.dispatch().iter().enumerate() {
        if p > 0.0 {
            let gen = &net.generators()[g];
            sources.push(Source {
                id: gen.id.clone(),
                bus: net.gen_bus(g),
                fuel: gen.fuel.clone(),
                rate_override: gen.rate_override,
                mw: p,
                kind: SourceKind::Generator,
            });
        }
    }
    for x in snap.extra_sources() {
        if x.mw > 0.0 {
            sources.push(Source {
                id: x.id.clone(),
                bus: x.bus,
                fuel: x.fuel.clone(),
                rate_override: None,
                mw: x.mw,
                kind: SourceKind::NegativeLoad,
            });
        }
    }

    let mut edges = Vec::with_capacity(sources.len() + net.lines().len());
    edges.extend(sources.iter().enumerate().map(|(s, src)| Edge {
        src: n + s,
        dst: src.bus,
        flow: src.mw,
        origin: EdgeOrigin::Source(s),
    }));
    for (l, flow) in snap.flows().iter().enumerate() {
        let f = flow.mw;
        if f.abs() < opts.eps {
            continue;
        }
        let (from, to) = net.line_ends(l);
        let (src, dst) = if f > 0.0 { (from, to) } else { (to, from) };
        edges.push(Edge {
            src,
            dst,
            flow: f.abs(),
            origin: EdgeOrigin::Line(l),
        });
    }

    let parts = Parts {
        bus_ids: net.buses().iter().map(|b| b.id.clone()).collect(),
        line_ids: net.lines().iter().map(|l| l.id.clone()).collect(),
        sources,
        edges,
        declared: snap.loads().iter().zip(snap.loss_demand()).map(|(l, d)| l + d).collect(),
    };
    parts.balance(&opts.tol, opts.eps, opts.policy.clone())
}

/// Assembles a flow graph directly from nodes and edges, for fixtures and
/// randomized tests. Bus demand is whatever inflow the edges leave behind.
#[derive(Default)]
pub struct FlowGraphBuilder {
    bus_ids: Vec<String>,
    line_ids: Vec<String>,
    sources: Vec<Source>,
    lines: Vec<(usize, usize, f64)>,
}

impl FlowGraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bus(&mut self, id: impl Into<String>) -> usize {
        self.bus_ids.push(id.into());
        self.bus_ids.len() - 1
    }

    /// Adds a virtual source of `mw` feeding bus `bus`; returns its source index.
    pub fn source(&mut self, id: impl Into<String>, bus: usize, fuel: FuelType, mw: f64) -> usize {
        self.sources.push(Source {
            id: id.into(),
            bus,
            fuel,
            rate_override: None,
            mw,
            kind: SourceKind::Generator,
        });
        self.sources.len() - 1
    }

    pub fn line(&mut self, id: impl Into<String>, from: usize, to: usize, flow: f64) -> &mut Self {
        self.line_ids.push(id.into());
        self.lines.push((from, to, flow));
        self
    }

    /// Edge with an auto-generated id.
    pub fn edge(&mut self, from: usize, to: usize, flow: f64) -> &mut Self {
        let id = format!("e{}", self.lines.len());
        self.line(id, from, to, flow)
    }

    /// Builds the graph; fails if some bus sends out more than it receives
    /// beyond `tol`.
    pub fn build(self, tol: &Tolerance) -> Result<DirectedFlowGraph, FlowGraphError> {
        let n = self.bus_ids.len();
        let mut edges: Vec<Edge> = self
            .sources
            .iter()
            .enumerate()
            .map(|(s, src)| Edge {
                src: n + s,
                dst: src.bus,
                flow: src.mw,
                origin: EdgeOrigin::Source(s),
            })
            .collect();
        edges.extend(self.lines.iter().enumerate().map(|(k, &(src, dst, flow))| Edge {
            src,
            dst,
            flow,
            origin: EdgeOrigin::Line(k),
        }));
        let parts = Parts {
            declared: vec![0.0; n],
            bus_ids: self.bus_ids,
            line_ids: self.line_ids,
            sources: self.sources,
            edges,
        };
        parts.balance(tol, 0.0, LossPolicy::AbsorbAsDemand)
    }
}

#[cfg(test)]
mod tests {
    use std::path::Path;

    use super::*;
    use crate::model::LineFlow;

    fn net(text: &str) -> Network {
        Network::from_json_str(text, Path::new("n.json")).unwrap()
    }

    fn two_bus() -> Network {
        net(r#"{
            "buses": [{"id": "b1"}, {"id": "b2"}],
            "generators": [
                {"id": "g1", "bus": "b1", "fuel": "coal", "capacity_mw": 100},
                {"id": "g2", "bus": "b2", "fuel": "gas", "capacity_mw": 100}
            ],
            "lines": [{"id": "l1", "from": "b1", "to": "b2"}]
        }"#)
    }

    #[test]
    fn negative_flow_reversed() {
        let n = two_bus();
        let s = Snapshot::new(&n, "t", vec![50.0, 0.0], vec![0.0, 50.0], vec![LineFlow::single(-50.0)]).unwrap();
        let g = orient(&n, &s, &OrientOptions::default()).unwrap();
        let line = g.edges().iter().find(|e| e.origin == EdgeOrigin::Line(0)).unwrap();
        assert_eq!((line.src, line.dst, line.flow), (1, 0, 50.0));
        assert_eq!(g.source_count(), 1); // g1 dispatches nothing
    }

    #[test]
    fn generator_becomes_source_edge() {
        let n = two_bus();
        let s = Snapshot::new(&n, "t", vec![0.0, 30.0], vec![30.0, 0.0], vec![LineFlow::single(30.0)]).unwrap();
        let g = orient(&n, &s, &OrientOptions::default()).unwrap();
        let e = g.edges()[0];
        assert_eq!(g.node(e.src), NodeRef::Source("g1"));
        assert_eq!(g.node(e.dst), NodeRef::Bus("b1"));
        assert_eq!(e.flow, 30.0);
        assert_eq!(g.demand(1), 30.0);
        assert_eq!(g.demand(0), 0.0);
    }

    #[test]
    fn absorb_loss_as_demand() {
        // inflow 100 from b1, outflow 97 to b3, load 2 → d = 3
        let n = net(r#"{
            "buses": [{"id": "b1"}, {"id": "b2"}, {"id": "b3"}],
            "generators": [{"id": "g1", "bus": "b1", "fuel": "coal", "capacity_mw": 100}],
            "lines": [{"id": "l12", "from": "b1", "to": "b2"}, {"id": "l23", "from": "b2", "to": "b3"}]
        }"#);
        let s = Snapshot::new(
            &n,
            "t",
            vec![0.0, 2.0, 97.0],
            vec![100.0],
            vec![LineFlow::single(100.0), LineFlow::single(97.0)],
        )
        .unwrap();
        let g = orient(&n, &s, &OrientOptions::default()).unwrap();
        assert_eq!(g.demand(1), 3.0);
        assert_eq!(g.loss_residual(1), 1.0);

        let strict = OrientOptions {
            policy: LossPolicy::Strict,
            ..Default::default()
        };
        let err = orient(&n, &s, &strict).unwrap_err();
        assert!(matches!(err, FlowGraphError::Imbalance { ref bus, .. } if bus == "b2"));
    }

    #[test]
    fn deficit_needs_slack() {
        let n = two_bus();
        // b2 needs 60 but only 50 arrives
        let s = Snapshot::new(&n, "t", vec![0.0, 60.0], vec![50.0, 0.0], vec![LineFlow::single(50.0)]).unwrap();
        assert!(matches!(
            orient(&n, &s, &OrientOptions::default()),
            Err(FlowGraphError::Imbalance { .. })
        ));
        let slack = OrientOptions {
            policy: "slack".parse().unwrap(),
            ..Default::default()
        };
        let g = orient(&n, &s, &slack).unwrap();
        let src = g.sources().last().unwrap();
        assert_eq!(src.kind, SourceKind::Slack);
        assert_eq!(src.fuel, FuelType::OtherImport);
        assert_eq!(src.mw, 10.0);
        assert_eq!(g.demand(1), 60.0);
        assert_eq!(g.inflow(1), 60.0);
        let last = g.edges().last().unwrap();
        assert_eq!(g.node(last.src), NodeRef::Source("b2:slack"));
    }

    #[test]
    fn unsupplied_demand_is_infeasible() {
        let n = two_bus();
        let s = Snapshot::new(&n, "t", vec![0.0, 5.0], vec![0.0, 0.0], vec![LineFlow::single(0.0)]).unwrap();
        let slack = OrientOptions {
            policy: LossPolicy::SlackSource { fuel: FuelType::OtherImport },
            ..Default::default()
        };
        assert!(matches!(orient(&n, &s, &slack), Err(FlowGraphError::Infeasible { ref bus, .. }) if bus == "b2"));
    }

    #[test]
    fn dust_flows_dropped() {
        let n = two_bus();
        let s = Snapshot::new(&n, "t", vec![10.0, 0.0], vec![10.0, 0.0], vec![LineFlow::single(1e-9)]).unwrap();
        let g = orient(&n, &s, &OrientOptions::default()).unwrap();
        assert_eq!(g.edges().len(), 1);
    }

    #[test]
    fn dual_end_flows_reconciled() {
        let n = two_bus();
        let s = Snapshot::new(&n, "t", vec![0.0, 98.0], vec![100.0, 0.0], vec![LineFlow::dual(100.0, 98.0)]).unwrap();
        let strict = OrientOptions {
            policy: LossPolicy::Strict,
            ..Default::default()
        };
        let g = orient(&n, &s, &strict).unwrap();
        assert_eq!(g.demand(1), 100.0);
        assert_eq!(g.declared_load(1), 100.0);
    }

    #[test]
    fn degrees() {
        let mut b = FlowGraphBuilder::new();
        let b1 = b.bus("b1");
        let b2 = b.bus("b2");
        b.source("g", b1, FuelType::Coal, 10.0);
        b.edge(b1, b2, 10.0);
        let g = b.build(&Tolerance::default()).unwrap();
        let d = degree_tables(&g);
        assert_eq!(d[b1], Degree { in_deg: 1, out_deg: 1 });
        assert_eq!(d[b2], Degree { in_deg: 1, out_deg: 0 });
        assert_eq!(d[g.source_node(0)], Degree { in_deg: 0, out_deg: 1 });

        let empty = FlowGraphBuilder::new().build(&Tolerance::default()).unwrap();
        assert!(degree_tables(&empty).is_empty());
    }

    #[test]
    fn diamond_degrees() {
        let mut b = FlowGraphBuilder::new();
        let ids: Vec<usize> = (1..=4).map(|i| b.bus(format!("b{i}"))).collect();
        b.source("g", ids[0], FuelType::Coal, 100.0);
        b.edge(ids[0], ids[1], 60.0).edge(ids[0], ids[2], 40.0);
        b.edge(ids[1], ids[3], 60.0).edge(ids[2], ids[3], 40.0);
        let g = b.build(&Tolerance::default()).unwrap();
        assert_eq!(degree_tables(&g)[ids[3]].in_deg, 2);
    }

    #[test]
    fn policy_parsing() {
        assert_eq!("strict".parse::<LossPolicy>().unwrap(), LossPolicy::Strict);
        assert_eq!(
            "slack:coal".parse::<LossPolicy>().unwrap(),
            LossPolicy::SlackSource { fuel: FuelType::Coal }
        );
        assert!("bogus".parse::<LossPolicy>().is_err());
        assert_eq!(LossPolicy::SlackSource { fuel: FuelType::Solar }.to_string(), "slack:solar");
    }

    #[test]
    fn dot_dump() {
        let mut b = FlowGraphBuilder::new();
        let b1 = b.bus("b1");
        b.source("g", b1, FuelType::Coal, 1.5);
        let dot = b.build(&Tolerance::default()).unwrap().to_dot();
        assert!(dot.contains("\"gen:g\" -> \"b1\" [label=\"1.5\"]"), "{dot}");
    }
}

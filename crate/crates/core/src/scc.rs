//! Strongly connected components of a flow graph and its condensation.
//!
//! Cycle flows live inside SCCs. Collapsing each SCC into one supernode,
//! with the members' demand summed and parallel edges merged, leaves a DAG
//! that carries the same flow across every component boundary.

use serde::Serialize;
use thiserror::Error;

use crate::flowgraph::{DirectedFlowGraph, Source};
use crate::graph::{kahn_check, Acyclicity, Csr};

#[derive(Debug, Error)]
pub enum SccError {
    #[error("partition covers {partition} nodes but the graph has {graph}")]
    PartitionMismatch { partition: usize, graph: usize },
    #[error("virtual source \"{0}\" lies on a cycle")]
    SourceInCycle(String),
    #[error("condensed graph still has a cycle through {0:?} (internal error)")]
    CycleAfterCondensation(Vec<usize>),
}

/// Disjoint cover of a graph's nodes by strongly connected components.
///
/// Components are numbered by their smallest member and list members in
/// ascending order, so the partition does not depend on DFS order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SccPartition {
    component_of: Vec<usize>,
    components: Vec<Vec<usize>>,
}

impl SccPartition {
    fn from_labels(labels: &[usize]) -> Self {
        let mut renumber = vec![usize::MAX; labels.len()];
        let mut component_of = Vec::with_capacity(labels.len());
        let mut components: Vec<Vec<usize>> = Vec::new();
        for (v, &raw) in labels.iter().enumerate() {
            if renumber[raw] == usize::MAX {
                renumber[raw] = components.len();
                components.push(Vec::new());
            }
            let c = renumber[raw];
            component_of.push(c);
            components[c].push(v);
        }
        Self { component_of, components }
    }

    pub fn node_count(&self) -> usize {
        self.component_of.len()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn component_of(&self, v: usize) -> usize {
        self.component_of[v]
    }

    pub fn members(&self, c: usize) -> &[usize] {
        &self.components[c]
    }

    pub fn components(&self) -> &[Vec<usize>] {
        &self.components
    }

    /// Components with more than one member.
    pub fn nontrivial(&self) -> impl Iterator<Item = (usize, &[usize])> {
        self.components
            .iter()
            .enumerate()
            .filter(|(_, m)| m.len() > 1)
            .map(|(c, m)| (c, m.as_slice()))
    }
}

const UNVISITED: usize = usize::MAX;

/// Tarjan's algorithm with an explicit DFS stack.
pub fn strongly_connected(succ: &Csr) -> SccPartition {
    let n = succ.node_count();
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut label = vec![0usize; n];
    let mut stack = Vec::new();
    let mut call: Vec<(usize, usize)> = Vec::new();
    let mut counter = 0;
    let mut found = 0;

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;
        call.push((root, 0));

        while let Some(frame) = call.last_mut() {
            let v = frame.0;
            let row = succ.row(v);
            if frame.1 < row.len() {
                let w = row[frame.1];
                frame.1 += 1;
                if index[w] == UNVISITED {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    label[w] = found;
                    if w == v {
                        break;
                    }
                }
                found += 1;
            }
        }
    }
    SccPartition::from_labels(&label)
}

fn successor_table(g: &DirectedFlowGraph) -> Csr {
    let edges = g.edges();
    Csr::group(g.node_count(), edges.iter().map(|e| (e.src, e.dst)))
}

/// SCCs of a flow graph.
pub fn find_sccs(g: &DirectedFlowGraph) -> SccPartition {
    strongly_connected(&successor_table(g))
}

/// Kahn check on an uncondensed flow graph.
pub fn check_acyclic(g: &DirectedFlowGraph) -> Acyclicity {
    kahn_check(&successor_table(g))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CondensedEdge {
    pub src: usize,
    pub dst: usize,
    pub flow: f64,
}

const NO_EDGE: u32 = u32::MAX;

/// The flow graph with every SCC collapsed to a supernode.
///
/// Node ids are component ids: supernodes (containing buses) come first,
/// then one node per virtual source in the base graph's source order.
#[derive(Debug)]
pub struct CondensedGraph {
    base: DirectedFlowGraph,
    partition: SccPartition,
    super_count: usize,
    edges: Vec<CondensedEdge>,
    edge_map: Vec<u32>,
    demand: Vec<f64>,
    outgoing: Csr,
    incoming: Csr,
}

impl CondensedGraph {
    pub fn base(&self) -> &DirectedFlowGraph {
        &self.base
    }

    pub fn partition(&self) -> &SccPartition {
        &self.partition
    }

    /// Number of bus supernodes.
    pub fn super_count(&self) -> usize {
        self.super_count
    }

    pub fn node_count(&self) -> usize {
        self.partition.len()
    }

    pub fn edges(&self) -> &[CondensedEdge] {
        &self.edges
    }

    pub fn out_edges(&self, v: usize) -> &[usize] {
        self.outgoing.row(v)
    }

    pub fn in_edges(&self, v: usize) -> &[usize] {
        self.incoming.row(v)
    }

    pub fn inflow(&self, v: usize) -> f64 {
        self.in_edges(v).iter().map(|&e| self.edges[e].flow).sum()
    }

    pub fn outflow(&self, v: usize) -> f64 {
        self.out_edges(v).iter().map(|&e| self.edges[e].flow).sum()
    }

    /// Aggregated demand of node `v` (zero for sources).
    pub fn demand(&self, v: usize) -> f64 {
        self.demand[v]
    }

    /// Source index behind node `v`, if it is a virtual source.
    pub fn source_index(&self, v: usize) -> Option<usize> {
        v.checked_sub(self.super_count)
    }

    pub fn source_at(&self, v: usize) -> Option<&Source> {
        self.source_index(v).map(|s| &self.base.sources()[s])
    }

    /// Supernode containing bus `b`.
    pub fn supernode_of(&self, b: usize) -> usize {
        self.partition.component_of(b)
    }

    /// Condensed edge carrying base edge `e`, or `None` for intra-SCC edges.
    pub fn condensed_edge(&self, e: usize) -> Option<usize> {
        let k = self.edge_map[e];
        (k != NO_EDGE).then_some(k as usize)
    }

    /// Bus members of supernode `v`.
    pub fn members(&self, v: usize) -> &[usize] {
        self.partition.members(v)
    }

    pub fn label(&self, v: usize) -> String {
        match self.members(v) {
            [b] if v < self.super_count => self.base.bus_ids()[*b].clone(),
            [s] => self.base.node(*s).to_string(),
            _ => format!("scc-{v}"),
        }
    }

    /// Sources injecting directly into supernode `v`, with their output.
    pub fn internal_generation(&self, v: usize) -> Vec<(&Source, f64)> {
        self.in_edges(v)
            .iter()
            .filter_map(|&e| {
                let edge = self.edges[e];
                self.source_at(edge.src).map(|s| (s, edge.flow))
            })
            .collect()
    }

    fn successor_table(&self) -> Csr {
        Csr::group(self.node_count(), self.edges.iter().map(|e| (e.src, e.dst)))
    }
}

/// Collapses each component of `p` into one node.
pub fn condense(g: DirectedFlowGraph, p: SccPartition) -> Result<CondensedGraph, SccError> {
    if p.node_count() != g.node_count() {
        return Err(SccError::PartitionMismatch {
            partition: p.node_count(),
            graph: g.node_count(),
        });
    }
    let n_bus = g.bus_count();
    let super_count = p.components().iter().take_while(|m| m[0] < n_bus).count();
    for members in &p.components()[super_count..] {
        if members.len() > 1 || members[0] < n_bus {
            let src = members.iter().find(|&&v| v >= n_bus).copied().unwrap_or(members[0]);
            return Err(SccError::SourceInCycle(g.node(src).to_string()));
        }
    }

    let n = p.len();
    let mut demand = vec![0.0; n];
    for (c, members) in p.components().iter().enumerate().take(super_count) {
        demand[c] = members.iter().map(|&b| g.demand(b)).sum();
    }

    let base_edges = g.edges();
    let mut edges: Vec<CondensedEdge> = Vec::with_capacity(base_edges.len());
    let mut edge_map = vec![NO_EDGE; base_edges.len()];
    let mut slot = vec![0u32; n];
    let mut owner = vec![usize::MAX; n];
    for (c, members) in p.components().iter().enumerate() {
        for &m in members {
            for &e in g.out_edges(m) {
                let edge = base_edges[e];
                let d = p.component_of(edge.dst);
                if d == c {
                    continue;
                }
                if owner[d] == c {
                    edges[slot[d] as usize].flow += edge.flow;
                } else {
                    owner[d] = c;
                    slot[d] = edges.len() as u32;
                    edges.push(CondensedEdge {
                        src: c,
                        dst: d,
                        flow: edge.flow,
                    });
                }
                edge_map[e] = slot[d];
            }
        }
    }

    let outgoing = Csr::group(n, edges.iter().enumerate().map(|(k, e)| (e.src, k)));
    let incoming = Csr::group(n, edges.iter().enumerate().map(|(k, e)| (e.dst, k)));
    let condensed = CondensedGraph {
        base: g,
        partition: p,
        super_count,
        edges,
        edge_map,
        demand,
        outgoing,
        incoming,
    };
    match assert_acyclic(&condensed) {
        Acyclicity::Acyclic => Ok(condensed),
        Acyclicity::Cyclic { residual } => Err(SccError::CycleAfterCondensation(residual)),
    }
}

/// Kahn check on a condensed graph; the residual set witnesses a cycle.
pub fn assert_acyclic(g: &CondensedGraph) -> Acyclicity {
    kahn_check(&g.successor_table())
}

/// Audit listing of the multi-bus components.
#[derive(Debug, Serialize)]
pub struct SccDump {
    pub components: usize,
    pub singletons: usize,
    pub sccs: std::collections::BTreeMap<String, Vec<String>>,
}

pub fn scc_dump(g: &CondensedGraph) -> SccDump {
    let sccs = (0..g.super_count())
        .filter(|&c| g.members(c).len() > 1)
        .map(|c| {
            let members = g.members(c).iter().map(|&b| g.base().bus_ids()[b].clone()).collect();
            (g.label(c), members)
        })
        .collect();
    SccDump {
        components: g.node_count(),
        singletons: g.partition().components().iter().filter(|m| m.len() == 1).count(),
        sccs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowgraph::FlowGraphBuilder;
    use crate::model::{FuelType, Tolerance};

    fn sets(p: &SccPartition) -> Vec<Vec<usize>> {
        p.components().to_vec()
    }

    #[test]
    fn dag_is_all_singletons() {
        let csr = Csr::successors(4, &[(0, 1), (0, 2), (1, 3), (2, 3)]);
        let p = strongly_connected(&csr);
        assert_eq!(p.len(), 4);
        assert_eq!(p.nontrivial().count(), 0);
    }

    #[test]
    fn triangle_with_tail() {
        // b1→b2→b3→b1, b3→b4
        let csr = Csr::successors(4, &[(0, 1), (1, 2), (2, 0), (2, 3)]);
        assert_eq!(sets(&strongly_connected(&csr)), vec![vec![0, 1, 2], vec![3]]);
    }

    #[test]
    fn two_disjoint_two_cycles() {
        let csr = Csr::successors(4, &[(0, 1), (1, 0), (2, 3), (3, 2)]);
        assert_eq!(sets(&strongly_connected(&csr)), vec![vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn deep_path_does_not_overflow() {
        let n = 200_000;
        let edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).chain([(n - 1, 0)]).collect();
        let p = strongly_connected(&Csr::successors(n, &edges));
        assert_eq!(p.len(), 1);
    }

    /// g→b1 (15), b1→b2 (15), b2→b1 (5), b2→b3 (10): the 5 MW circulates.
    fn circulating() -> DirectedFlowGraph {
        let mut b = FlowGraphBuilder::new();
        let b1 = b.bus("b1");
        let b2 = b.bus("b2");
        let b3 = b.bus("b3");
        b.source("g", b1, FuelType::Coal, 10.0);
        b.edge(b1, b2, 15.0).edge(b2, b1, 5.0).edge(b2, b3, 10.0);
        b.build(&Tolerance::default()).unwrap()
    }

    #[test]
    fn raw_two_cycle_is_cyclic() {
        let g = circulating();
        assert_eq!(check_acyclic(&g), Acyclicity::Cyclic { residual: vec![0, 1, 2] });
    }

    #[test]
    fn circulation_vanishes_after_condense() {
        let g = circulating();
        let p = find_sccs(&g);
        let c = condense(g, p).unwrap();
        assert_eq!(c.super_count(), 2);
        let sn = c.supernode_of(0);
        assert_eq!(sn, c.supernode_of(1));
        assert_eq!(c.inflow(sn), 10.0);
        assert_eq!(c.outflow(sn), 10.0);
        assert_eq!(c.demand(sn), 0.0);
        assert_eq!(c.label(sn), "scc-0");
        assert!(assert_acyclic(&c).is_acyclic());
        assert_eq!(c.internal_generation(sn)[0].1, 10.0);
        // the b2→b1 edge is internal
        assert_eq!(c.condensed_edge(2), None);
        let dump = scc_dump(&c);
        assert_eq!(dump.sccs["scc-0"], vec!["b1", "b2"]);
        assert_eq!(dump.singletons, 2);
    }

    #[test]
    fn dag_condenses_to_itself() {
        let mut b = FlowGraphBuilder::new();
        let b1 = b.bus("b1");
        let b2 = b.bus("b2");
        let b3 = b.bus("b3");
        b.source("g", b1, FuelType::Coal, 10.0);
        b.edge(b1, b2, 6.0).edge(b1, b3, 3.0).edge(b2, b3, 2.0);
        let g = b.build(&Tolerance::default()).unwrap();
        let p = find_sccs(&g);
        let c = condense(g, p).unwrap();
        assert_eq!(c.node_count(), c.base().node_count());
        assert_eq!(c.edges().len(), c.base().edges().len());
        for (k, e) in c.base().edges().iter().enumerate() {
            let ce = c.edges()[c.condensed_edge(k).unwrap()];
            assert_eq!((ce.src, ce.dst, ce.flow), (e.src, e.dst, e.flow));
        }
        for v in 0..3 {
            assert_eq!(c.demand(v), c.base().demand(v));
            assert_eq!(c.label(v), c.base().bus_ids()[v]);
        }
    }

    #[test]
    fn parallel_edges_merge() {
        // SCC {b1,b2} both feed b3
        let mut b = FlowGraphBuilder::new();
        let b1 = b.bus("b1");
        let b2 = b.bus("b2");
        let b3 = b.bus("b3");
        b.source("g", b1, FuelType::Coal, 10.0);
        b.edge(b1, b2, 8.0).edge(b2, b1, 1.0).edge(b1, b3, 3.0).edge(b2, b3, 7.0);
        let g = b.build(&Tolerance::default()).unwrap();
        let p = find_sccs(&g);
        let c = condense(g, p).unwrap();
        let into_b3 = c.in_edges(c.supernode_of(b3));
        assert_eq!(into_b3.len(), 1);
        assert_eq!(c.edges()[into_b3[0]].flow, 10.0);
    }

    #[test]
    fn mismatched_partition() {
        let g = circulating();
        let p = strongly_connected(&Csr::successors(2, &[]));
        assert!(matches!(condense(g, p), Err(SccError::PartitionMismatch { .. })));
    }

    #[test]
    fn empty_graph() {
        let g = FlowGraphBuilder::new().build(&Tolerance::default()).unwrap();
        let p = find_sccs(&g);
        let c = condense(g, p).unwrap();
        assert!(assert_acyclic(&c).is_acyclic());
        assert_eq!(c.node_count(), 0);
    }
}

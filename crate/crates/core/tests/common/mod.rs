#![allow(dead_code)]

use std::path::{Path, PathBuf};

use gridcarbon::flowgraph::{DirectedFlowGraph, FlowGraphBuilder};
use gridcarbon::model::{parse_network, parse_snapshot, FuelType, Network, Snapshot, Tolerance};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn load_case(stem: &str) -> (Network, Snapshot) {
    let net = parse_network(fixture(&format!("{stem}.network.json"))).unwrap();
    let snap = parse_snapshot(fixture(&format!("{stem}.snapshot.json")), &net).unwrap();
    (net, snap)
}

/// A balanced random acyclic flow graph on `n` buses.
///
/// Buses are visited in a random topological order. Each bus may get a
/// source; its supply (inflow + local generation) is split among random
/// forward edges with the rest left as demand.
pub struct RandomDag {
    pub graph: DirectedFlowGraph,
    /// (src bus, dst bus, flow) of bus-to-bus edges.
    pub edges: Vec<(usize, usize, f64)>,
}

pub fn random_dag(rng: &mut impl Rng, n: usize, tol: &Tolerance) -> RandomDag {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut b = FlowGraphBuilder::new();
    for i in 0..n {
        b.bus(format!("n{i}"));
    }
    let mut supply = vec![0.0; n];
    let mut edges = Vec::new();
    let mut k = 0;
    for pos in 0..n {
        let v = order[pos];
        if supply[v] == 0.0 || rng.gen_bool(0.3) {
            let mw = rng.gen_range(1.0..100.0);
            let fuel = FuelType::BUILTIN[rng.gen_range(0..FuelType::BUILTIN.len())].clone();
            b.source(format!("s{k}"), v, fuel, mw);
            k += 1;
            supply[v] += mw;
        }
        let later = &order[pos + 1..];
        if later.is_empty() {
            continue;
        }
        let fanout = rng.gen_range(0..=later.len().min(3));
        let targets: Vec<usize> = later.choose_multiple(rng, fanout).copied().collect();
        let mut budget = supply[v] * rng.gen_range(0.2..0.95);
        for (j, &w) in targets.iter().enumerate() {
            let f = if j + 1 == targets.len() { budget } else { budget * rng.gen_range(0.1..0.9) };
            budget -= f;
            if f > 1e-3 {
                b.edge(v, w, f);
                supply[w] += f;
                edges.push((v, w, f));
            }
        }
    }
    RandomDag {
        graph: b.build(tol).unwrap(),
        edges,
    }
}

/// GNDF by explicit enumeration of every source→node path; the weight of a
/// path is the product over hops of `flow(e) / inflow(head(e))`.
pub fn path_enumeration_gndf(g: &DirectedFlowGraph) -> Vec<Vec<f64>> {
    let n = g.node_count();
    let k = g.source_count();
    let mut gndf = vec![vec![0.0; k]; n];
    fn walk(g: &DirectedFlowGraph, v: usize, weight: f64, s: usize, gndf: &mut [Vec<f64>]) {
        for &e in g.out_edges(v) {
            let edge = g.edges()[e];
            let w = weight * edge.flow / g.inflow(edge.dst);
            gndf[edge.dst][s] += w;
            walk(g, edge.dst, w, s, gndf);
        }
    }
    for s in 0..k {
        let v = g.source_node(s);
        gndf[v][s] = 1.0;
        walk(g, v, 1.0, s, &mut gndf);
    }
    gndf
}

/// SCCs from the transitive closure: u ~ v iff each reaches the other.
pub fn closure_sccs(n: usize, arcs: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut reach = vec![vec![false; n]; n];
    for (v, row) in reach.iter_mut().enumerate() {
        row[v] = true;
    }
    for &(a, b) in arcs {
        reach[a][b] = true;
    }
    for m in 0..n {
        for i in 0..n {
            if reach[i][m] {
                for j in 0..n {
                    if reach[m][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for u in 0..n {
        if seen[u] {
            continue;
        }
        let comp: Vec<usize> = (0..n).filter(|&v| reach[u][v] && reach[v][u]).collect();
        for &v in &comp {
            seen[v] = true;
        }
        out.push(comp);
    }
    out
}

/// Max absolute difference between a sparse row and a dense row.
pub fn row_error(sparse: &[(u32, f64)], dense: &[f64]) -> f64 {
    let mut full = vec![0.0; dense.len()];
    for &(s, f) in sparse {
        full[s as usize] = f;
    }
    full.iter().zip(dense).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

//! Locational carbon accounting over solved power-flow snapshots.
//!
//! The pipeline is `model` (parse + validate) → `flowgraph` (orient flows,
//! attach generators as virtual sources) → `scc` (collapse cycle flows into
//! supernodes) → `tracer` (proportional-sharing propagation in topological
//! order) → `report` (totals, regions, metrics). `synth` builds consistent
//! snapshots for tests and benchmarks.

pub mod bench;
pub mod flowgraph;
pub mod graph;
pub mod model;
pub mod numfmt;
pub mod report;
pub mod scc;
pub mod synth;
pub mod tracer;

mod error;

pub use error::Error;
pub use flowgraph::{orient, DirectedFlowGraph, LossPolicy, OrientOptions};
pub use model::{
    parse_network, parse_snapshot, validate_snapshot, EmissionTable, FuelType, Network, Snapshot,
    Tolerance,
};
pub use scc::{condense, find_sccs, CondensedGraph, SccPartition};
pub use tracer::{trace, Lae, TraceResult};

/// Runs orient → find_sccs → condense on one snapshot.
pub fn condense_snapshot(
    net: &Network,
    snap: &Snapshot,
    opts: &OrientOptions,
) -> Result<CondensedGraph, Error> {
    let graph = orient(net, snap, opts)?;
    let partition = find_sccs(&graph);
    Ok(condense(graph, partition)?)
}

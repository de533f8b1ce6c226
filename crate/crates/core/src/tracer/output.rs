use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{MixEntry, TraceResult};
use crate::flowgraph::EdgeOrigin;
use crate::numfmt::sig9;
use crate::report::system_emissions;

/// Fractions below this are left out of `trace.json`.
const GNDF_FLOOR: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceMetadata {
    pub timestamp: String,
    pub loss_policy: String,
    pub eps: f64,
    pub buses: usize,
    pub sources: usize,
    pub edges: usize,
    pub sccs: usize,
    pub system_emissions_t: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BusTrace {
    pub id: String,
    pub demand_mw: f64,
    /// `None` when nothing flows into the bus.
    pub lae: Option<f64>,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scc: Option<String>,
    pub gndf: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineTrace {
    pub id: String,
    pub from: String,
    pub to: String,
    pub flow_mw: f64,
    pub gldf: BTreeMap<String, f64>,
}

/// Serializable form of a trace. Floats are rounded to 9 significant digits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceDocument {
    pub metadata: TraceMetadata,
    pub buses: Vec<BusTrace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gldf: Option<Vec<LineTrace>>,
}

impl TraceDocument {
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("trace document serializes");
        s.push('\n');
        s
    }
}

fn named(t: &TraceResult<'_>, row: &[MixEntry]) -> BTreeMap<String, f64> {
    let sources = t.sources();
    row.iter()
        .filter(|&&(_, f)| f >= GNDF_FLOOR)
        .map(|&(s, f)| (sources[s as usize].id.clone(), sig9(f)))
        .collect()
}

pub fn trace_document(t: &TraceResult<'_>, timestamp: &str, with_gldf: bool) -> TraceDocument {
    let g = t.graph();
    let base = g.base();
    let buses = base
        .bus_ids()
        .iter()
        .enumerate()
        .map(|(b, id)| {
            let lae = t.lae_at(b);
            let c = g.supernode_of(b);
            BusTrace {
                id: id.clone(),
                demand_mw: sig9(t.bus_demand(b)),
                lae: lae.rate().map(sig9),
                status: lae.status().to_string(),
                scc: (g.members(c).len() > 1).then(|| g.label(c)),
                gndf: named(t, t.bus_mix(b)),
            }
        })
        .collect();

    let gldf = with_gldf.then(|| {
        base.edges()
            .iter()
            .enumerate()
            .map(|(e, edge)| LineTrace {
                id: match edge.origin {
                    EdgeOrigin::Line(k) => base.line_id(k).to_string(),
                    EdgeOrigin::Source(s) => base.sources()[s].id.clone(),
                },
                from: base.node(edge.src).to_string(),
                to: base.node(edge.dst).to_string(),
                flow_mw: sig9(edge.flow),
                gldf: named(t, t.edge_mix(e)),
            })
            .collect()
    });

    TraceDocument {
        metadata: TraceMetadata {
            timestamp: timestamp.to_string(),
            loss_policy: base.policy().to_string(),
            eps: base.eps(),
            buses: base.bus_count(),
            sources: base.source_count(),
            edges: base.edges().len(),
            sccs: g.partition().nontrivial().count(),
            system_emissions_t: sig9(system_emissions(t, base.demands())),
        },
        buses,
        gldf,
    }
}

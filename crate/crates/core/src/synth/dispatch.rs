use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::model::Network;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispatchUnit {
    pub id: String,
    pub bus: usize,
    pub capacity_mw: f64,
    /// Marginal cost, $/MWh.
    pub cost: f64,
}

/// Single-period economic dispatch input. Line limits are carried for
/// completeness but ignored by [`merit_dispatch`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispatchProblem {
    pub loads: Vec<f64>,
    pub units: Vec<DispatchUnit>,
    #[serde(default)]
    pub line_limits: Option<Vec<f64>>,
}

impl DispatchProblem {
    /// One unit per network generator, `costs` aligned with generators.
    pub fn from_network(net: &Network, loads: &[f64], costs: &[f64]) -> Result<Self, SynthError> {
        if costs.len() != net.generators().len() {
            return Err(SynthError::Length {
                what: "costs",
                got: costs.len(),
                expected: net.generators().len(),
            });
        }
        let units = net
            .generators()
            .iter()
            .zip(costs)
            .enumerate()
            .map(|(g, (gen, &cost))| DispatchUnit {
                id: gen.id.clone(),
                bus: net.gen_bus(g),
                capacity_mw: gen.capacity_mw,
                cost,
            })
            .collect();
        Ok(Self {
            loads: loads.to_vec(),
            units,
            line_limits: None,
        })
    }
}

/// Loads units in ascending (cost, id) order until total load is met; the
/// last unit loaded may be partial.
pub fn merit_dispatch(p: &DispatchProblem) -> Result<Vec<f64>, SynthError> {
    let load: f64 = p.loads.iter().sum();
    let capacity: f64 = p.units.iter().map(|u| u.capacity_mw).sum();
    if capacity < load {
        return Err(SynthError::Shortfall {
            deficit: load - capacity,
        });
    }
    let mut order: Vec<usize> = (0..p.units.len()).collect();
    order.sort_by(|&a, &b| {
        let (ua, ub) = (&p.units[a], &p.units[b]);
        ua.cost.total_cmp(&ub.cost).then_with(|| ua.id.cmp(&ub.id))
    });
    let mut out = vec![0.0; p.units.len()];
    let mut filled = 0.0;
    for k in order {
        let remaining = load - filled;
        if remaining <= 0.0 {
            break;
        }
        let cap = p.units[k].capacity_mw;
        if cap >= remaining {
            out[k] = remaining;
            break;
        }
        out[k] = cap;
        filled += cap;
    }
    Ok(out)
}

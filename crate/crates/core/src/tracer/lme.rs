use serde::{Deserialize, Serialize};

use super::TraceError;
use crate::model::{EmissionTable, Network, Snapshot};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LmeOptions {
    /// Accept load changes at several buses and divide by their sum.
    pub allow_multi_bus: bool,
    /// Load changes at or below this many MW count as unchanged.
    pub load_tol: f64,
}

impl Default for LmeOptions {
    fn default() -> Self {
        Self {
            allow_multi_bus: false,
            load_tol: 1e-9,
        }
    }
}

/// Marginal emission rate from a base/perturbed snapshot pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmeResult {
    pub bus: String,
    pub delta_mw: f64,
    pub base_emissions_t: f64,
    pub perturbed_emissions_t: f64,
    pub mu_t_per_mwh: f64,
}

fn source_emissions(net: &Network, table: &EmissionTable, snap: &Snapshot) -> Result<f64, TraceError> {
    let mut total = 0.0;
    for (g, &p) in net.generators().iter().zip(snap.dispatch()) {
        total += table.resolve(&g.fuel, g.rate_override)? * p;
    }
    for x in snap.extra_sources() {
        total += table.resolve(&x.fuel, None)? * x.mw;
    }
    Ok(total)
}

/// `μ = Σ_k γ_k (p̂_k − p_k) / (p̂_bus − p_bus)`.
///
/// The numerator is summed per generator so unchanged units contribute
/// exactly zero.
pub fn lme(
    net: &Network,
    table: &EmissionTable,
    base: &Snapshot,
    perturbed: &Snapshot,
    bus: &str,
    opts: &LmeOptions,
) -> Result<LmeResult, TraceError> {
    let b = net.bus_idx(bus).ok_or_else(|| TraceError::UnknownBus(bus.to_string()))?;
    if base.loads().len() != perturbed.loads().len() || base.loads().len() != net.buses().len() {
        return Err(TraceError::SnapshotMismatch("bus count"));
    }
    if base.dispatch().len() != perturbed.dispatch().len() {
        return Err(TraceError::SnapshotMismatch("generator count"));
    }

    let load = |s: &Snapshot, i: usize| s.loads()[i] + s.loss_demand()[i];
    let changed: Vec<usize> = (0..net.buses().len())
        .filter(|&i| (load(perturbed, i) - load(base, i)).abs() > opts.load_tol)
        .collect();
    let delta = if opts.allow_multi_bus {
        changed.iter().map(|&i| load(perturbed, i) - load(base, i)).sum()
    } else {
        if changed.iter().any(|&i| i != b) {
            return Err(TraceError::MultiPerturbation(
                changed.iter().map(|&i| net.buses()[i].id.clone()).collect(),
            ));
        }
        load(perturbed, b) - load(base, b)
    };
    if delta.abs() <= opts.load_tol {
        return Err(TraceError::DegeneratePerturbation(bus.to_string()));
    }

    let mut numerator = 0.0;
    for (g, (p0, p1)) in net.generators().iter().zip(base.dispatch().iter().zip(perturbed.dispatch())) {
        if p1 != p0 {
            numerator += table.resolve(&g.fuel, g.rate_override)? * (p1 - p0);
        }
    }
    for x in perturbed.extra_sources() {
        numerator += table.resolve(&x.fuel, None)? * x.mw;
    }
    for x in base.extra_sources() {
        numerator -= table.resolve(&x.fuel, None)? * x.mw;
    }

    Ok(LmeResult {
        bus: bus.to_string(),
        delta_mw: delta,
        base_emissions_t: source_emissions(net, table, base)?,
        perturbed_emissions_t: source_emissions(net, table, perturbed)?,
        mu_t_per_mwh: numerator / delta,
    })
}

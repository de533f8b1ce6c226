use serde::Serialize;

use super::{Network, Snapshot, Tolerance};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BusResidual {
    pub bus: String,
    /// inflow + generation − outflow − load (MW).
    pub residual: f64,
    /// Line inflow plus local generation.
    pub supply: f64,
    /// Line outflow plus load.
    pub use_mw: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub bus: String,
    pub residual: f64,
    pub bound: f64,
}

/// Nodal balance check of a snapshot.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub residuals: Vec<BusResidual>,
    pub max_abs_residual: f64,
    pub violations: Vec<Violation>,
    pub total_generation: f64,
    pub total_load: f64,
    pub total_line_loss: f64,
    /// Set when total generation falls short of total load by more than the
    /// tolerance.
    pub supply_shortfall: Option<f64>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty() && self.supply_shortfall.is_none()
    }
}

/// Per-bus balance residuals `r_i = inflow_i + gen_i − outflow_i − load_i`.
///
/// Lines leave the sending bus at their sending-end magnitude and arrive at
/// the receiving bus at the receiving-end magnitude, so residuals sum to
/// total generation − total load − total line loss.
pub fn validate_snapshot(net: &Network, snap: &Snapshot, tol: &Tolerance) -> ValidationReport {
    let n = net.buses().len();
    let mut supply = vec![0.0; n];
    let mut use_mw: Vec<f64> = snap
        .loads()
        .iter()
        .zip(snap.loss_demand())
        .map(|(l, d)| l + d)
        .collect();

    for (g, &p) in snap.dispatch().iter().enumerate() {
        supply[net.gen_bus(g)] += p;
    }
    for s in snap.extra_sources() {
        supply[s.bus] += s.mw;
    }
    let mut total_line_loss = 0.0;
    for (l, flow) in snap.flows().iter().enumerate() {
        let (from, to) = net.line_ends(l);
        let (src, dst) = if flow.mw >= 0.0 { (from, to) } else { (to, from) };
        use_mw[src] += flow.mw.abs();
        supply[dst] += flow.delivered();
        total_line_loss += flow.mw.abs() - flow.delivered();
    }

    let mut residuals = Vec::with_capacity(n);
    let mut violations = Vec::new();
    let mut max_abs_residual: f64 = 0.0;
    for (i, bus) in net.buses().iter().enumerate() {
        let residual = supply[i] - use_mw[i];
        let bound = tol.bound(supply[i].max(use_mw[i]));
        max_abs_residual = max_abs_residual.max(residual.abs());
        if residual.abs() > bound {
            violations.push(Violation {
                bus: bus.id.clone(),
                residual,
                bound,
            });
        }
        residuals.push(BusResidual {
            bus: bus.id.clone(),
            residual,
            supply: supply[i],
            use_mw: use_mw[i],
        });
    }

    let total_generation = snap.total_generation();
    let total_load = snap.total_load();
    let shortfall = total_load - total_generation;
    ValidationReport {
        residuals,
        max_abs_residual,
        violations,
        total_generation,
        total_load,
        total_line_loss,
        supply_shortfall: (shortfall > tol.bound(total_load)).then_some(shortfall),
    }
}

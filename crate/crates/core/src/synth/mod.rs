//! Consistent synthetic snapshots: DC power flow, merit-order dispatch and
//! seeded random grids.

mod dcflow;
mod dispatch;
pub mod solver;

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{Bus, FuelType, Generator, Line, LineFlow, ModelError, Network, Snapshot};

pub use dcflow::{balance_flows, dc_flow};
pub use dispatch::{merit_dispatch, DispatchProblem, DispatchUnit};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    Length {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("injections sum to {sum} MW, expected 0")]
    Unbalanced { sum: f64 },
    #[error("network is disconnected: bus \"{bus}\" is unreachable")]
    Disconnected { bus: String },
    #[error("line \"{0}\" has no reactance")]
    MissingReactance(String),
    #[error("line \"{line}\" has invalid reactance {x}")]
    InvalidReactance { line: String, x: f64 },
    #[error("susceptance matrix is singular at bus \"{bus}\"")]
    Singular { bus: String },
    #[error("capacity short of load by {deficit} MW")]
    Shortfall { deficit: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Snapshot from merit dispatch plus DC flow. Flows are balanced along a
/// spanning tree so nodal residuals sit at rounding level.
pub fn make_snapshot(net: &Network, loads: &[f64], costs: &[f64]) -> Result<Snapshot, SynthError> {
    if loads.len() != net.buses().len() {
        return Err(SynthError::Length {
            what: "loads",
            got: loads.len(),
            expected: net.buses().len(),
        });
    }
    let dispatch = merit_dispatch(&DispatchProblem::from_network(net, loads, costs)?)?;
    let mut injections: Vec<f64> = loads.iter().map(|l| -l).collect();
    for (g, &p) in dispatch.iter().enumerate() {
        injections[net.gen_bus(g)] += p;
    }
    let mut flows = dc_flow(net, &injections)?;
    balance_flows(net, &injections, &mut flows);
    Ok(Snapshot::new(
        net,
        "synthetic",
        loads.to_vec(),
        dispatch,
        flows.into_iter().map(LineFlow::single).collect(),
    )?)
}

/// A network with the loads and unit costs needed to dispatch it.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthGrid {
    pub network: Network,
    pub loads: Vec<f64>,
    pub costs: Vec<f64>,
}

impl SynthGrid {
    pub fn snapshot(&self) -> Result<Snapshot, SynthError> {
        make_snapshot(&self.network, &self.loads, &self.costs)
    }

    /// Re-dispatched snapshot with `delta_mw` added to the load at `bus`.
    pub fn perturbed(&self, bus: usize, delta_mw: f64) -> Result<Snapshot, SynthError> {
        let mut loads = self.loads.clone();
        let Some(l) = loads.get_mut(bus) else {
            return Err(SynthError::InvalidParameter(format!("bus index {bus} out of range")));
        };
        *l += delta_mw;
        if *l < 0.0 {
            return Err(SynthError::InvalidParameter(format!("perturbed load {l} is negative")));
        }
        make_snapshot(&self.network, &loads, &self.costs)
    }
}

/// Max index distance of tree edges and chords; keeps the Laplacian banded.
const WINDOW: usize = 8;

/// Spanning tree over `start..start + len` plus chords until `lines` edges.
fn local_edges(
    rng: &mut ChaCha8Rng,
    start: usize,
    len: usize,
    lines: usize,
    pairs: &mut Vec<(usize, usize)>,
    seen: &mut HashSet<(usize, usize)>,
) {
    let target = pairs.len() + lines;
    for i in 1..len {
        let p = i - 1 - rng.gen_range(0..WINDOW.min(i));
        pairs.push((start + p, start + i));
        seen.insert((start + p, start + i));
    }
    let mut attempts = 0usize;
    while pairs.len() < target && len > 2 {
        attempts += 1;
        let (a, b) = if attempts < 50 * lines {
            let i = rng.gen_range(0..len - 2);
            (i, (i + 2 + rng.gen_range(0..WINDOW)).min(len - 1))
        } else {
            let i = rng.gen_range(0..len);
            let j = rng.gen_range(0..len);
            (i.min(j), i.max(j))
        };
        if a != b && seen.insert((start + a, start + b)) {
            pairs.push((start + a, start + b));
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..=hi)
}

fn line_set(rng: &mut ChaCha8Rng, pairs: &[(usize, usize)], bus_ids: &[String]) -> Vec<Line> {
    pairs
        .iter()
        .enumerate()
        .map(|(k, &(a, b))| Line {
            id: format!("l{k}"),
            from: bus_ids[a].clone(),
            to: bus_ids[b].clone(),
            x_pu: Some(uniform(rng, 0.01, 0.1)),
            limit_mw: None,
        })
        .collect()
}

/// Seeded random connected grid: a local spanning tree plus chords, so the
/// number of lines is `round(avg_degree · n / 2)` (at least `n − 1`).
/// Reactances are uniform in [0.01, 0.1] pu, loads in [1, 50] MW, unit costs
/// in [5, 100] $/MWh; total capacity is 1.5× total load.
pub fn random_grid(n_buses: usize, n_gens: usize, avg_degree: f64, seed: u64) -> Result<SynthGrid, SynthError> {
    if n_buses < 2 {
        return Err(SynthError::InvalidParameter(format!("n_buses must be ≥ 2, got {n_buses}")));
    }
    if n_gens == 0 {
        return Err(SynthError::InvalidParameter("n_gens must be ≥ 1".into()));
    }
    if !(avg_degree.is_finite() && avg_degree >= 1.0) {
        return Err(SynthError::InvalidParameter(format!("avg_degree must be ≥ 1, got {avg_degree}")));
    }
    let n = n_buses;
    let lines = ((avg_degree * n as f64 / 2.0).round() as usize).max(n - 1);
    if lines > n * (n - 1) / 2 {
        return Err(SynthError::InvalidParameter(format!(
            "{lines} lines do not fit on {n} buses without parallel lines"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bus_ids: Vec<String> = (0..n).map(|i| format!("b{i}")).collect();
    let mut pairs = Vec::with_capacity(lines);
    let mut seen = HashSet::with_capacity(lines);
    local_edges(&mut rng, 0, n, lines, &mut pairs, &mut seen);
    drop(seen);
    let line_list = line_set(&mut rng, &pairs, &bus_ids);
    let loads: Vec<f64> = (0..n).map(|_| uniform(&mut rng, 1.0, 50.0)).collect();

    let total_load: f64 = loads.iter().sum();
    let weights: Vec<f64> = (0..n_gens).map(|_| uniform(&mut rng, 0.5, 1.5)).collect();
    let scale = 1.5 * total_load / weights.iter().sum::<f64>();
    let mut costs = Vec::with_capacity(n_gens);
    let generators = weights
        .iter()
        .enumerate()
        .map(|(k, w)| {
            let bus = rng.gen_range(0..n);
            let fuel = FuelType::BUILTIN[rng.gen_range(0..FuelType::BUILTIN.len())].clone();
            costs.push(uniform(&mut rng, 5.0, 100.0));
            Generator {
                id: format!("g{k}"),
                bus: bus_ids[bus].clone(),
                fuel,
                capacity_mw: w * scale,
                rate_override: None,
            }
        })
        .collect();
    let buses = bus_ids
        .into_iter()
        .map(|id| Bus {
            id,
            region: None,
            population: None,
        })
        .collect();
    Ok(SynthGrid {
        network: Network::new(buses, generators, line_list)?,
        loads,
        costs,
    })
}

/// 200-bus, three-region grid joined in a chain `coal - mixed - solar` by
/// single tie lines. The coal region only holds coal units and exports; the
/// solar region only holds solar units covering 99.5% of its load and imports
/// the rest; the mixed region runs hydro, nuclear and gas.
pub fn three_region_demo(seed: u64) -> Result<SynthGrid, SynthError> {
    const SIZES: [(&str, usize); 3] = [("coal", 67), ("mixed", 66), ("solar", 67)];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buses = Vec::new();
    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    let mut starts = Vec::new();
    for (region, len) in SIZES {
        let start = buses.len();
        starts.push(start);
        for k in 0..len {
            buses.push(Bus {
                id: format!("{region}-{k}"),
                region: Some(region.to_string()),
                population: Some(rng.gen_range(1_000..=50_000)),
            });
        }
        local_edges(&mut rng, start, len, (1.3 * len as f64) as usize, &mut pairs, &mut seen);
    }
    // tie lines from the last bus of one region to the first of the next
    pairs.push((starts[1] - 1, starts[1]));
    pairs.push((starts[2] - 1, starts[2]));

    let bus_ids: Vec<String> = buses.iter().map(|b| b.id.clone()).collect();
    let lines = line_set(&mut rng, &pairs, &bus_ids);
    let loads: Vec<f64> = (0..buses.len()).map(|_| uniform(&mut rng, 1.0, 50.0)).collect();
    let region_load = |r: usize| -> f64 {
        let end = starts.get(r + 1).copied().unwrap_or(buses.len());
        loads[starts[r]..end].iter().sum()
    };
    let total: f64 = loads.iter().sum();

    // (region, fuel, units, total capacity, cost range)
    let fleet = [
        (0, FuelType::Coal, 6, 1.5 * region_load(0), (15.0, 25.0)),
        (1, FuelType::Hydro, 2, 0.1 * region_load(1), (1.0, 3.0)),
        (1, FuelType::Nuclear, 2, 0.2 * region_load(1), (6.0, 9.0)),
        (1, FuelType::NaturalGas, 4, region_load(1) + 0.1 * total, (30.0, 45.0)),
        (2, FuelType::Solar, 6, 0.995 * region_load(2), (0.0, 0.0)),
    ];
    let mut generators = Vec::new();
    let mut costs = Vec::new();
    for (r, fuel, units, capacity, (lo, hi)) in fleet {
        let len = SIZES[r].1;
        for k in 0..units {
            let bus = starts[r] + rng.gen_range(0..len);
            generators.push(Generator {
                id: format!("{}-{}{k}", SIZES[r].0, fuel.as_str()),
                bus: bus_ids[bus].clone(),
                fuel: fuel.clone(),
                capacity_mw: capacity / units as f64,
                rate_override: None,
            });
            costs.push(if hi > lo { uniform(&mut rng, lo, hi) } else { lo });
        }
    }
    Ok(SynthGrid {
        network: Network::new(buses, generators, lines)?,
        loads,
        costs,
    })
}

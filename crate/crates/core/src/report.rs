//! Post-trace analytics: system totals, regional aggregation, accuracy
//! metrics, renewable allocation and import-rate fitting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::model::{Network, Tolerance};
use crate::numfmt::{cell, sig9};
use crate::tracer::TraceResult;

pub const UNASSIGNED: &str = "unassigned";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    Length {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("series is empty")]
    EmptySeries,
    #[error("actual value is zero at index {0}; MAPE is undefined")]
    ZeroActual(usize),
    #[error("bus \"{bus}\" gets a renewable share of {share} MW; baseline is inconsistent")]
    InconsistentBaseline { bus: String, share: f64 },
    #[error("import fit needs at least 2 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("import fit is degenerate: every import is zero")]
    DegenerateImports,
    #[error("boundary file: {0}")]
    Boundaries(String),
}

fn check_len(what: &'static str, got: usize, expected: usize) -> Result<(), ReportError> {
    if got == expected {
        Ok(())
    } else {
        Err(ReportError::Length { what, got, expected })
    }
}

/// `E = Σ_i δ_i · d_i` over buses with a defined rate.
pub fn system_emissions(t: &TraceResult<'_>, demands: &[f64]) -> f64 {
    demands
        .iter()
        .enumerate()
        .filter_map(|(b, &d)| t.lae_at(b).rate().map(|r| r * d))
        .sum()
}

/// Per-bus rate where every SCC member takes its supernode's rate.
pub fn bus_rates(t: &TraceResult<'_>) -> Vec<Option<f64>> {
    (0..t.graph().base().bus_count()).map(|b| t.lae_at(b).rate()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionRow {
    pub region: String,
    pub demand_mw: f64,
    pub emissions_t: f64,
    /// emissions / demand, `None` for zero demand.
    pub rate_t_per_mwh: Option<f64>,
    pub population: Option<u64>,
    /// t CO₂/h per person, `None` without a positive population.
    pub per_capita: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub regions: Vec<RegionRow>,
    pub total_demand_mw: f64,
    pub total_emissions_t: f64,
}

impl RegionReport {
    pub fn region(&self, name: &str) -> Option<&RegionRow> {
        self.regions.iter().find(|r| r.region == name)
    }

    /// `region,demand_mw,emissions_t,rate_t_per_mwh,per_capita`
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let row = |w: &mut csv::Writer<Vec<u8>>, fields: [String; 5]| {
            w.write_record(&fields).expect("writing to memory");
        };
        row(&mut w, ["region", "demand_mw", "emissions_t", "rate_t_per_mwh", "per_capita"].map(String::from));
        for r in &self.regions {
            row(
                &mut w,
                [
                    r.region.clone(),
                    cell(Some(r.demand_mw)),
                    cell(Some(r.emissions_t)),
                    cell(r.rate_t_per_mwh),
                    cell(r.per_capita),
                ],
            );
        }
        String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv output is utf-8")
    }

    /// Joins the report onto a GeoJSON FeatureCollection. Features are matched
    /// by `properties.region`, falling back to the feature `id`; geometry is
    /// copied through unchanged.
    pub fn to_geojson(&self, boundaries: &Value) -> Result<Value, ReportError> {
        let features = boundaries
            .get("features")
            .and_then(Value::as_array)
            .ok_or_else(|| ReportError::Boundaries("expected a FeatureCollection with \"features\"".into()))?;
        let mut out = Vec::with_capacity(features.len());
        for (i, f) in features.iter().enumerate() {
            let name = f
                .pointer("/properties/region")
                .or_else(|| f.get("id"))
                .and_then(|v| match v {
                    Value::String(s) => Some(s.clone()),
                    Value::Number(n) => Some(n.to_string()),
                    _ => None,
                })
                .ok_or_else(|| ReportError::Boundaries(format!("feature {i} has no region or id")))?;
            let row = self.region(&name);
            out.push(json!({
                "type": "Feature",
                "geometry": f.get("geometry").cloned().unwrap_or(Value::Null),
                "properties": {
                    "region": name,
                    "rate_t_per_mwh": row.and_then(|r| r.rate_t_per_mwh).map(sig9),
                    "emissions_t": row.map(|r| sig9(r.emissions_t)),
                    "per_capita": row.and_then(|r| r.per_capita).map(sig9),
                },
            }));
        }
        Ok(json!({ "type": "FeatureCollection", "features": out }))
    }
}

/// Groups buses by region tag; untagged buses go to [`UNASSIGNED`].
pub fn aggregate_rates(net: &Network, rates: &[Option<f64>], demands: &[f64]) -> Result<RegionReport, ReportError> {
    let n = net.buses().len();
    check_len("rates", rates.len(), n)?;
    check_len("demands", demands.len(), n)?;

    #[derive(Default)]
    struct Acc {
        demand: f64,
        emissions: f64,
        population: Option<u64>,
    }
    let mut acc: BTreeMap<&str, Acc> = BTreeMap::new();
    for (b, bus) in net.buses().iter().enumerate() {
        let a = acc.entry(bus.region.as_deref().unwrap_or(UNASSIGNED)).or_default();
        a.demand += demands[b];
        if let Some(r) = rates[b] {
            a.emissions += r * demands[b];
        }
        if let Some(p) = bus.population {
            *a.population.get_or_insert(0) += p;
        }
    }

    let regions: Vec<RegionRow> = acc
        .into_iter()
        .map(|(name, a)| RegionRow {
            region: name.to_string(),
            demand_mw: a.demand,
            emissions_t: a.emissions,
            rate_t_per_mwh: (a.demand > 0.0).then(|| a.emissions / a.demand),
            population: a.population,
            per_capita: a.population.filter(|&p| p > 0).map(|p| a.emissions / p as f64),
        })
        .collect();
    Ok(RegionReport {
        total_demand_mw: regions.iter().map(|r| r.demand_mw).sum(),
        total_emissions_t: regions.iter().map(|r| r.emissions_t).sum(),
        regions,
    })
}

pub fn aggregate_regions(t: &TraceResult<'_>, net: &Network, demands: &[f64]) -> Result<RegionReport, ReportError> {
    aggregate_rates(net, &bus_rates(t), demands)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesMetrics {
    pub n: usize,
    /// `None` when some actual value is zero.
    pub mape: Option<f64>,
    /// `None` when every actual value is zero.
    pub wmape: Option<f64>,
}

impl SeriesMetrics {
    /// MAPE, or the index of the first zero actual value.
    pub fn require_mape(&self, actual: &[f64]) -> Result<f64, ReportError> {
        self.mape.ok_or_else(|| ReportError::ZeroActual(actual.iter().position(|&a| a == 0.0).unwrap_or(0)))
    }
}

/// MAPE = (1/T) Σ |a − e| / |a|; wMAPE = Σ |a − e| / Σ |a|.
pub fn series_metrics(actual: &[f64], estimated: &[f64]) -> Result<SeriesMetrics, ReportError> {
    check_len("estimated", estimated.len(), actual.len())?;
    if actual.is_empty() {
        return Err(ReportError::EmptySeries);
    }
    let abs_err = || actual.iter().zip(estimated).map(|(a, e)| (a - e).abs());
    let mape = actual.iter().all(|&a| a != 0.0).then(|| {
        abs_err().zip(actual).map(|(d, a)| d / a.abs()).sum::<f64>() / actual.len() as f64
    });
    let denom: f64 = actual.iter().map(|a| a.abs()).sum();
    let wmape = (denom > 0.0).then(|| abs_err().sum::<f64>() / denom);
    Ok(SeriesMetrics {
        n: actual.len(),
        mape,
        wmape,
    })
}

/// Renewable MW at each bus: full load minus the contributions of
/// non-renewable sources in a trace of the non-renewable-only baseline.
/// Shares that are negative within `tol` are clamped to zero.
pub fn allocate_renewables(
    full_loads: &[f64],
    net_trace: &TraceResult<'_>,
    net_demands: &[f64],
    tol: &Tolerance,
) -> Result<Vec<f64>, ReportError> {
    let base = net_trace.graph().base();
    let n = base.bus_count();
    check_len("full loads", full_loads.len(), n)?;
    check_len("net demands", net_demands.len(), n)?;
    let sources = net_trace.sources();
    (0..n)
        .map(|b| {
            let frac: f64 = net_trace
                .bus_mix(b)
                .iter()
                .filter(|&&(s, _)| !sources[s as usize].fuel.is_renewable())
                .map(|&(_, f)| f)
                .sum();
            let share = full_loads[b] - frac * net_demands[b];
            if share < -tol.bound(full_loads[b]) {
                return Err(ReportError::InconsistentBaseline {
                    bus: base.bus_ids()[b].clone(),
                    share,
                });
            }
            Ok(share.max(0.0))
        })
        .collect()
}

/// Least-squares slope through the origin: `Σ p·e / Σ p²`.
pub fn fit_import_rate(pairs: &[(f64, f64)]) -> Result<f64, ReportError> {
    if pairs.len() < 2 {
        return Err(ReportError::TooFewPairs(pairs.len()));
    }
    let pp: f64 = pairs.iter().map(|(p, _)| p * p).sum();
    if pp == 0.0 {
        return Err(ReportError::DegenerateImports);
    }
    Ok(pairs.iter().map(|(p, e)| p * e).sum::<f64>() / pp)
}

//! Wall-clock timing of orient → find_sccs → condense → trace.

use std::time::{Duration, Instant};

use serde::Serialize;

use crate::flowgraph::{orient, OrientOptions};
use crate::model::{EmissionTable, Network, Snapshot};
use crate::scc::{condense, find_sccs};
use crate::synth::random_grid;
use crate::tracer::trace;
use crate::Error;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub n_buses: usize,
    pub n_lines: usize,
    /// Nodes plus edges of the oriented graph (sources included).
    pub graph_size: usize,
    pub seconds: f64,
}

/// Fastest of `repeats` pipeline runs, with the oriented graph's node and
/// edge counts. Input parsing and generation are excluded.
pub fn time_pipeline(
    net: &Network,
    snap: &Snapshot,
    opts: &OrientOptions,
    table: &EmissionTable,
    repeats: usize,
) -> Result<(Duration, usize), Error> {
    let mut best = Duration::MAX;
    let mut size = 0;
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        let g = orient(net, snap, opts)?;
        size = g.node_count() + g.edges().len();
        let p = find_sccs(&g);
        let c = condense(g, p)?;
        let t = trace(&c, table)?;
        std::hint::black_box(t.order().len());
        best = best.min(start.elapsed());
    }
    Ok((best, size))
}

/// Times the pipeline on `random_grid(n, n_gens, degree, seed)` for each size.
pub fn bench_sizes(
    sizes: &[usize],
    n_gens: usize,
    seed: u64,
    degree: f64,
    repeats: usize,
) -> Result<Vec<BenchRow>, Error> {
    let table = EmissionTable::default();
    sizes
        .iter()
        .map(|&n| {
            let grid = random_grid(n, n_gens, degree, seed)?;
            let snap = grid.snapshot()?;
            let (elapsed, graph_size) = time_pipeline(&grid.network, &snap, &OrientOptions::default(), &table, repeats)?;
            Ok(BenchRow {
                n_buses: n,
                n_lines: grid.network.lines().len(),
                graph_size,
                seconds: elapsed.as_secs_f64(),
            })
        })
        .collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<_> = [1e3, 1e4, 1e5].iter().map(|&x: &f64| (x, 3.0 * x.powf(1.1))).collect();
        assert!((loglog_slope(&pts).unwrap() - 1.1).abs() < 1e-12);
        assert_eq!(loglog_slope(&[(1.0, 1.0)]), None);
    }
}

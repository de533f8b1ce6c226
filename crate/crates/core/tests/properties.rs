mod common;

use common::random_dag;
use gridcarbon::flowgraph::{FlowGraphBuilder, LossPolicy, OrientOptions};
use gridcarbon::model::{FuelType, Tolerance};
use gridcarbon::report::{
    aggregate_regions, allocate_renewables, fit_import_rate, series_metrics, system_emissions,
};
use gridcarbon::scc::{assert_acyclic, condense, find_sccs};
use gridcarbon::synth::{random_grid, SynthGrid};
use gridcarbon::tracer::{trace_with, TieBreak, TraceOptions};
use gridcarbon::{condense_snapshot, trace, CondensedGraph, EmissionTable};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn dag(seed: u64, n: usize) -> CondensedGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = random_dag(&mut rng, n, &Tolerance::default());
    let p = find_sccs(&d.graph);
    condense(d.graph, p).unwrap()
}

fn row_sum(row: &[(u32, f64)]) -> f64 {
    row.iter().map(|r| r.1).sum()
}

fn grid(seed: u64, n: usize) -> (SynthGrid, gridcarbon::Snapshot) {
    let g = random_grid(n, (n / 8).max(1), 2.5, seed).unwrap();
    let s = g.snapshot().unwrap();
    (g, s)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rows_are_stochastic(seed in any::<u64>(), n in 1usize..30) {
        let c = dag(seed, n);
        let t = trace(&c, &EmissionTable::default()).unwrap();
        for v in 0..c.node_count() {
            let row = t.node_mix(v);
            prop_assert!((row_sum(row) - 1.0).abs() < 1e-9);
            prop_assert!(row.iter().all(|&(_, f)| (0.0..=1.0 + 1e-15).contains(&f)));
        }
        for e in 0..c.base().edges().len() {
            prop_assert!((row_sum(t.edge_mix(e)) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn outflow_mix_equals_inflow_mix(seed in any::<u64>(), n in 2usize..20) {
        let c = dag(seed, n);
        let t = trace(&c, &EmissionTable::default()).unwrap();
        for v in 0..c.super_count() {
            if let Some(out) = t.outflow_mix(v) {
                prop_assert!(common::row_error(&out, &dense(t.node_mix(v), t.sources().len())) < 1e-9);
            }
        }
    }

    #[test]
    fn power_attribution_closes(seed in any::<u64>(), n in 20usize..200) {
        let (g, s) = grid(seed, n);
        let c = condense_snapshot(&g.network, &s, &OrientOptions::default()).unwrap();
        let t = trace(&c, &EmissionTable::default()).unwrap();
        let mut landed = vec![0.0; t.sources().len()];
        for b in 0..c.base().bus_count() {
            for (src, mw) in t.contributions(b) {
                let k = t.sources().iter().position(|x| x.id == src.id).unwrap();
                landed[k] += mw;
            }
        }
        for (src, mw) in t.sources().iter().zip(&landed) {
            prop_assert!((mw - src.mw).abs() <= 1e-9 * src.mw.max(1.0));
        }
    }

    #[test]
    fn carbon_is_conserved(seed in any::<u64>(), n in 20usize..300) {
        let (g, s) = grid(seed, n);
        let c = condense_snapshot(&g.network, &s, &OrientOptions::default()).unwrap();
        let table = EmissionTable::default();
        let t = trace(&c, &table).unwrap();
        let e = system_emissions(&t, c.base().demands());
        let direct: f64 = t.sources().iter().enumerate().map(|(k, src)| t.source_rate(k) * src.mw).sum();
        prop_assert!((e - direct).abs() <= 1e-9 * direct.max(1e-12));
    }

    #[test]
    fn pop_order_does_not_matter(seed in any::<u64>(), n in 1usize..25, tie in any::<u64>()) {
        let c = dag(seed, n);
        let table = EmissionTable::default();
        let a = trace(&c, &table).unwrap();
        let opts = TraceOptions { tie_break: TieBreak::Shuffled(tie), ..Default::default() };
        let b = trace_with(&c, &table, &opts).unwrap();
        for v in 0..c.node_count() {
            let (ra, rb) = (a.node_mix(v), b.node_mix(v));
            prop_assert_eq!(ra.len(), rb.len());
            for (x, y) in ra.iter().zip(rb) {
                prop_assert_eq!(x.0, y.0);
                prop_assert!((x.1 - y.1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scaling_leaves_mix_unchanged(seed in any::<u64>(), n in 1usize..20, k in 0.01f64..1000.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_dag(&mut rng, n, &Tolerance::default());
        let scaled = {
            let mut b = FlowGraphBuilder::new();
            for id in d.graph.bus_ids() {
                b.bus(id.clone());
            }
            for s in d.graph.sources() {
                b.source(s.id.clone(), s.bus, s.fuel.clone(), s.mw * k);
            }
            for &(u, v, f) in &d.edges {
                b.edge(u, v, f * k);
            }
            b.build(&Tolerance::default()).unwrap()
        };
        let table = EmissionTable::default();
        let p = find_sccs(&d.graph);
        let c1 = condense(d.graph, p).unwrap();
        let p = find_sccs(&scaled);
        let c2 = condense(scaled, p).unwrap();
        let (t1, t2) = (trace(&c1, &table).unwrap(), trace(&c2, &table).unwrap());
        for b in 0..n {
            prop_assert!(common::row_error(t1.bus_mix(b), &dense(t2.bus_mix(b), t2.sources().len())) < 1e-9);
        }
    }

    #[test]
    fn condensation_is_acyclic(seed in any::<u64>(), n in 2usize..12, extra in proptest::collection::vec((0usize..12, 0usize..12, 0.1f64..50.0), 0..10)) {
        // random DAG plus circulations around random back-edges
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_dag(&mut rng, n, &Tolerance::default());
        let mut b = FlowGraphBuilder::new();
        for id in d.graph.bus_ids() {
            b.bus(id.clone());
        }
        for s in d.graph.sources() {
            b.source(s.id.clone(), s.bus, s.fuel.clone(), s.mw);
        }
        for &(u, v, f) in &d.edges {
            b.edge(u, v, f);
        }
        for (u, v, c) in extra {
            let (u, v) = (u % n, v % n);
            if u != v {
                b.edge(u, v, c).edge(v, u, c);
            }
        }
        let g = b.build(&Tolerance::default()).unwrap();
        let p = find_sccs(&g);
        let c = condense(g, p).unwrap();
        prop_assert!(assert_acyclic(&c).is_acyclic());
        let t = trace(&c, &EmissionTable::default()).unwrap();
        for v in 0..c.node_count() {
            if c.inflow(v) > 0.0 {
                prop_assert!((row_sum(t.node_mix(v)) - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn regions_add_up(seed in any::<u64>(), n in 10usize..120) {
        let (mut g, _) = grid(seed, n);
        // tag buses into three regions with populations
        let buses: Vec<_> = g.network.buses().iter().enumerate().map(|(i, b)| {
            let mut b = b.clone();
            b.region = (i % 4 != 3).then(|| format!("r{}", i % 3));
            b.population = Some((i as u64 * 37) % 500);
            b
        }).collect();
        g.network = gridcarbon::Network::new(buses, g.network.generators().to_vec(), g.network.lines().to_vec()).unwrap();
        let s = g.snapshot().unwrap();
        let c = condense_snapshot(&g.network, &s, &OrientOptions::default()).unwrap();
        let t = trace(&c, &EmissionTable::default()).unwrap();
        let r = aggregate_regions(&t, &g.network, c.base().demands()).unwrap();
        let e = system_emissions(&t, c.base().demands());
        prop_assert!((r.total_emissions_t - e).abs() <= 1e-9 * e.max(1.0));
        for row in &r.regions {
            if row.demand_mw > 0.0 {
                prop_assert!((row.rate_t_per_mwh.unwrap() * row.demand_mw - row.emissions_t).abs() <= 1e-9 * row.emissions_t.max(1.0));
            }
        }
    }

    #[test]
    fn metrics_properties(pairs in proptest::collection::vec((1.0f64..1e4, 0.0f64..1e4), 1..40)) {
        let (a, e): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let m = series_metrics(&a, &e).unwrap();
        let worst = a.iter().zip(&e).map(|(a, e)| (a - e).abs() / a).fold(0.0, f64::max);
        prop_assert!(m.wmape.unwrap() <= worst + 1e-12);
        prop_assert!(m.mape.unwrap() >= 0.0);
        let flat = vec![a[0]; a.len()];
        let m = series_metrics(&flat, &e).unwrap();
        prop_assert!((m.mape.unwrap() - m.wmape.unwrap()).abs() < 1e-12);
    }

    #[test]
    fn import_fit_scales(pairs in proptest::collection::vec((1.0f64..500.0, 0.0f64..300.0), 2..30), c in 0.01f64..100.0) {
        let r = fit_import_rate(&pairs).unwrap();
        let scaled: Vec<_> = pairs.iter().map(|&(p, e)| (p, e * c)).collect();
        let rc = fit_import_rate(&scaled).unwrap();
        prop_assert!((rc - c * r).abs() <= 1e-12 * (c * r).abs().max(1.0));
    }

    #[test]
    fn import_fit_tolerates_symmetric_noise(s in 0.0f64..2.0, eps in 0.0f64..0.1, ps in proptest::collection::vec(1.0f64..500.0, 1..20)) {
        // each point appears with +ε·p and −ε·p noise, so the fit is exact up to rounding
        let pairs: Vec<_> = ps.iter().flat_map(|&p| [(p, (s + eps) * p), (p, (s - eps) * p)]).collect();
        prop_assert!((fit_import_rate(&pairs).unwrap() - s).abs() <= eps);
    }
}

fn dense(row: &[(u32, f64)], k: usize) -> Vec<f64> {
    let mut v = vec![0.0; k];
    for &(s, f) in row {
        v[s as usize] = f;
    }
    v
}

#[test]
fn renewable_allocation_conserves_energy() {
    // full system: coal at b1 (60), wind at b2 (40); loads 30 / 70.
    // baseline without wind: coal serves the net loads (30, 30).
    let tol = Tolerance::default();
    let mut b = FlowGraphBuilder::new();
    let b1 = b.bus("b1");
    let b2 = b.bus("b2");
    b.source("coal", b1, FuelType::Coal, 60.0);
    b.edge(b1, b2, 30.0);
    let g = b.build(&tol).unwrap();
    let p = find_sccs(&g);
    let c = condense(g, p).unwrap();
    let t = trace(&c, &EmissionTable::default()).unwrap();
    let full = [30.0, 70.0];
    let shares = allocate_renewables(&full, &t, c.base().demands(), &tol).unwrap();
    assert_eq!(shares, vec![0.0, 40.0]);
    let contributions: f64 = (0..2).map(|b| t.contributions(b).iter().map(|x| x.1).sum::<f64>()).sum();
    assert_eq!(contributions + shares.iter().sum::<f64>(), full.iter().sum::<f64>());

    // a share of 100 − 60 at a single bus
    let mut b = FlowGraphBuilder::new();
    let b1 = b.bus("b1");
    b.source("gas", b1, FuelType::NaturalGas, 60.0);
    let g = b.build(&tol).unwrap();
    let p = find_sccs(&g);
    let c = condense(g, p).unwrap();
    let t = trace(&c, &EmissionTable::default()).unwrap();
    assert_eq!(allocate_renewables(&[100.0], &t, c.base().demands(), &tol).unwrap(), vec![40.0]);
    assert!(allocate_renewables(&[50.0], &t, c.base().demands(), &tol).is_err());
}

#[test]
fn slack_policy_covers_deficit_and_conserves() {
    let (net, snap) = common::load_case("six_bus");
    let mut loads = snap.loads().to_vec();
    loads[2] += 5.0;
    let mut snap = snap.clone();
    snap.set_load(2, loads[2]).unwrap();
    let opts = OrientOptions {
        policy: LossPolicy::SlackSource { fuel: FuelType::OtherImport },
        ..Default::default()
    };
    let c = condense_snapshot(&net, &snap, &opts).unwrap();
    let t = trace(&c, &EmissionTable::default()).unwrap();
    let e = system_emissions(&t, c.base().demands());
    let direct: f64 = t.sources().iter().enumerate().map(|(k, s)| t.source_rate(k) * s.mw).sum();
    assert!((e - direct).abs() < 1e-9 * direct);
    assert!(t.sources().iter().any(|s| s.id == "n4:slack" && s.mw == 5.0));
}

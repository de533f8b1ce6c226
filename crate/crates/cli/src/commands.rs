use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::Args;
use gridcarbon::bench::{bench_sizes, loglog_slope, time_pipeline};
use gridcarbon::model::{parse_network, parse_snapshot_with, validate_snapshot, EmissionTable, Network};
use gridcarbon::numfmt::sig9;
use gridcarbon::report::{aggregate_rates, aggregate_regions, fit_import_rate, series_metrics};
use gridcarbon::scc::scc_dump;
use gridcarbon::synth::{random_grid, three_region_demo, SynthGrid};
use gridcarbon::tracer::{lme as lme_pair, trace as run_trace, trace_document, LmeOptions, TraceDocument};
use gridcarbon::condense_snapshot;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::output::{write_atomic, write_json};
use crate::Global;

/// Bad flag combination or argument value.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Rounds every float in a JSON tree to 9 significant digits.
fn rounded(value: impl Serialize) -> anyhow::Result<Value> {
    fn walk(v: &mut Value) {
        match v {
            Value::Number(n) if n.is_f64() => {
                if let Some(r) = n.as_f64().and_then(|x| serde_json::Number::from_f64(sig9(x))) {
                    *n = r;
                }
            }
            Value::Array(items) => items.iter_mut().for_each(walk),
            Value::Object(map) => map.values_mut().for_each(walk),
            _ => {}
        }
    }
    let mut v = serde_json::to_value(value)?;
    walk(&mut v);
    Ok(v)
}

pub fn validate(g: &Global, net: &Path, snapshot: &Path) -> anyhow::Result<ExitCode> {
    let net = parse_network(net)?;
    let snap = parse_snapshot_with(snapshot, &net, &g.snapshot_options())?;
    let report = validate_snapshot(&net, &snap, &g.tol);
    write_json(&g.out.join("validation.json"), &rounded(&report)?)?;
    for v in &report.violations {
        eprintln!("bus \"{}\": residual {} MW exceeds bound {}", v.bus, sig9(v.residual), sig9(v.bound));
    }
    if let Some(s) = report.supply_shortfall {
        eprintln!("generation is short of load by {} MW", sig9(s));
    }
    Ok(if report.is_ok() {
        println!("ok: {} buses, max |residual| {:.3e} MW", report.residuals.len(), report.max_abs_residual);
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

#[derive(Args, Debug)]
pub struct TraceArgs {
    #[arg(long)]
    net: PathBuf,
    /// Single snapshot (.json or .csv).
    #[arg(long, required_unless_present = "snapshot_dir", conflicts_with = "snapshot_dir")]
    snapshot: Option<PathBuf>,
    /// Directory of snapshots; outputs go to `<out>/<file stem>/`.
    #[arg(long)]
    snapshot_dir: Option<PathBuf>,
    /// Also write sccs.json listing multi-bus components.
    #[arg(long)]
    dump_sccs: bool,
    /// Include per-edge GLDF rows in trace.json.
    #[arg(long)]
    dump_gldf: bool,
    /// Also write graph.dot of the oriented flow graph.
    #[arg(long)]
    dump_dot: bool,
}

fn trace_one(
    g: &Global,
    args: &TraceArgs,
    net: &Network,
    table: &EmissionTable,
    snapshot: &Path,
    out: &Path,
) -> anyhow::Result<()> {
    let snap = parse_snapshot_with(snapshot, net, &g.snapshot_options())?;
    let condensed = condense_snapshot(net, &snap, &g.orient_options())?;
    let t = run_trace(&condensed, table).map_err(gridcarbon::Error::from)?;
    let doc = trace_document(&t, snap.timestamp(), args.dump_gldf);
    write_atomic(&out.join("trace.json"), doc.to_json_string().as_bytes())?;
    let report =
        aggregate_regions(&t, net, condensed.base().demands()).map_err(gridcarbon::Error::from)?;
    write_atomic(&out.join("report.csv"), report.to_csv().as_bytes())?;
    if args.dump_sccs {
        write_json(&out.join("sccs.json"), &scc_dump(&condensed))?;
    }
    if args.dump_dot {
        write_atomic(&out.join("graph.dot"), condensed.base().to_dot().as_bytes())?;
    }
    Ok(())
}

fn snapshot_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if path.is_file() && (ext.eq_ignore_ascii_case("json") || ext.eq_ignore_ascii_case("csv")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn trace(g: &Global, args: &TraceArgs) -> anyhow::Result<ExitCode> {
    let net = parse_network(&args.net)?;
    let table = g.table()?;
    table.check_covers(&net)?;

    if let Some(snapshot) = &args.snapshot {
        trace_one(g, args, &net, &table, snapshot, &g.out)?;
        println!("wrote {}", g.out.join("trace.json").display());
        return Ok(ExitCode::SUCCESS);
    }

    let dir = args.snapshot_dir.as_ref().expect("clap requires one input");
    let files = snapshot_files(dir)?;
    if files.is_empty() {
        bail!(UsageError(format!("no .json or .csv snapshots in {}", dir.display())));
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(g.jobs as usize).build()?;
    let results: Vec<anyhow::Result<()>> = pool.install(|| {
        files
            .par_iter()
            .map(|f| {
                let stem = f.file_stem().unwrap_or_default();
                trace_one(g, args, &net, &table, f, &g.out.join(stem))
                    .with_context(|| format!("{}", f.display()))
            })
            .collect()
    });
    let mut failures = 0;
    let mut first = None;
    for r in results {
        if let Err(e) = r {
            eprintln!("error: {}", crate::describe(&e));
            failures += 1;
            first.get_or_insert(e);
        }
    }
    match first {
        Some(e) => Err(e.context(format!("{failures} of {} snapshots failed", files.len()))),
        None => {
            println!("traced {} snapshots into {}", files.len(), g.out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

pub fn lme(
    g: &Global,
    net: &Path,
    base: &Path,
    perturbed: &Path,
    bus: &str,
    allow_multi_bus: bool,
) -> anyhow::Result<ExitCode> {
    let net = parse_network(net)?;
    let table = g.table()?;
    let base = parse_snapshot_with(base, &net, &g.snapshot_options())?;
    let perturbed = parse_snapshot_with(perturbed, &net, &g.snapshot_options())?;
    let opts = LmeOptions {
        allow_multi_bus,
        ..Default::default()
    };
    let r = lme_pair(&net, &table, &base, &perturbed, bus, &opts).map_err(gridcarbon::Error::from)?;
    write_json(&g.out.join("lme.json"), &rounded(&r)?)?;
    println!("{} {}", r.bus, sig9(r.mu_t_per_mwh));
    Ok(ExitCode::SUCCESS)
}

fn parse_perturb(s: &str) -> Result<(String, f64), String> {
    let (bus, mw) = s.rsplit_once(':').ok_or_else(|| format!("expected <bus>:<MW>, got \"{s}\""))?;
    let mw: f64 = mw.parse().map_err(|_| format!("invalid MW \"{mw}\""))?;
    if bus.is_empty() || !mw.is_finite() {
        return Err(format!("expected <bus>:<MW>, got \"{s}\""));
    }
    Ok((bus.to_string(), mw))
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 100)]
    buses: usize,
    /// Generator count (default: buses / 10).
    #[arg(long)]
    gens: Option<usize>,
    #[arg(long, default_value_t = 3.0)]
    degree: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// The 200-bus coal / mixed / solar three-region grid instead.
    #[arg(long)]
    demo: bool,
    /// Also write perturbed.json with `<MW>` added at `<bus>`, re-dispatched.
    #[arg(long, value_parser = parse_perturb, value_name = "BUS:MW")]
    perturb: Option<(String, f64)>,
}

pub fn synth(g: &Global, args: &SynthArgs) -> anyhow::Result<ExitCode> {
    let grid: SynthGrid = if args.demo {
        three_region_demo(args.seed)
    } else {
        random_grid(args.buses, args.gens.unwrap_or((args.buses / 10).max(1)), args.degree, args.seed)
    }
    .map_err(gridcarbon::Error::from)?;
    let net = &grid.network;
    let snap = grid.snapshot().map_err(gridcarbon::Error::from)?;
    write_atomic(&g.out.join("network.json"), net.to_json_string().as_bytes())?;
    write_atomic(&g.out.join("snapshot.json"), snap.to_json_string(net).as_bytes())?;
    if let Some((bus, mw)) = &args.perturb {
        let b = net
            .bus_idx(bus)
            .ok_or_else(|| UsageError(format!("unknown bus \"{bus}\" in --perturb")))?;
        let p = grid.perturbed(b, *mw).map_err(gridcarbon::Error::from)?;
        write_atomic(&g.out.join("perturbed.json"), p.to_json_string(net).as_bytes())?;
    }
    println!(
        "{} buses, {} generators, {} lines -> {}",
        net.buses().len(),
        net.generators().len(),
        net.lines().len(),
        g.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

#[derive(Args, Debug)]
pub struct AggregateArgs {
    /// trace.json from a previous `trace` run (needs --net).
    #[arg(long, requires = "net")]
    trace: Option<PathBuf>,
    #[arg(long)]
    net: Option<PathBuf>,
    /// GeoJSON FeatureCollection keyed by region; writes report.geojson.
    #[arg(long, requires = "trace")]
    boundaries: Option<PathBuf>,
    /// CSV of `actual,estimated` rows; writes metrics.json.
    #[arg(long)]
    series: Option<PathBuf>,
    /// CSV of `import_mw,import_t` rows; writes imports.json.
    #[arg(long)]
    imports: Option<PathBuf>,
}

/// Numeric two-column CSV; a non-numeric first row is taken as a header.
fn read_pairs(path: &Path) -> anyhow::Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("{}", path.display()))?;
        let parsed = (rec.get(0).map(str::parse::<f64>), rec.get(1).map(str::parse::<f64>));
        match parsed {
            (Some(Ok(a)), Some(Ok(b))) => out.push((a, b)),
            _ if i == 0 => continue,
            _ => bail!(UsageError(format!("{}: row {} is not two numbers", path.display(), i + 1))),
        }
    }
    Ok(out)
}

pub fn aggregate(g: &Global, args: &AggregateArgs) -> anyhow::Result<ExitCode> {
    if args.trace.is_none() && args.series.is_none() && args.imports.is_none() {
        bail!(UsageError("aggregate needs --trace, --series or --imports".into()));
    }
    if let (Some(trace_path), Some(net_path)) = (&args.trace, &args.net) {
        let net = parse_network(net_path)?;
        let text = std::fs::read_to_string(trace_path).with_context(|| format!("reading {}", trace_path.display()))?;
        let doc: TraceDocument =
            serde_json::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", trace_path.display())))?;
        let by_id: HashMap<&str, _> = doc.buses.iter().map(|b| (b.id.as_str(), b)).collect();
        let mut rates = Vec::with_capacity(net.buses().len());
        let mut demands = Vec::with_capacity(net.buses().len());
        for bus in net.buses() {
            let b = by_id
                .get(bus.id.as_str())
                .ok_or_else(|| UsageError(format!("bus \"{}\" missing from {}", bus.id, trace_path.display())))?;
            rates.push(b.lae);
            demands.push(b.demand_mw);
        }
        let report = aggregate_rates(&net, &rates, &demands).map_err(gridcarbon::Error::from)?;
        write_atomic(&g.out.join("report.csv"), report.to_csv().as_bytes())?;
        if let Some(path) = &args.boundaries {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let boundaries: Value =
                serde_json::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
            let geo = report.to_geojson(&boundaries).map_err(gridcarbon::Error::from)?;
            write_json(&g.out.join("report.geojson"), &geo)?;
        }
    }
    if let Some(path) = &args.series {
        let pairs = read_pairs(path)?;
        let (actual, estimated): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let m = series_metrics(&actual, &estimated).map_err(gridcarbon::Error::from)?;
        if let Err(e) = m.require_mape(&actual) {
            eprintln!("warning: {e}");
        }
        write_json(&g.out.join("metrics.json"), &rounded(&m)?)?;
    }
    if let Some(path) = &args.imports {
        let pairs = read_pairs(path)?;
        let rate = fit_import_rate(&pairs).map_err(gridcarbon::Error::from)?;
        write_json(
            &g.out.join("imports.json"),
            &rounded(serde_json::json!({ "pairs": pairs.len(), "rate_t_per_mwh": rate }))?,
        )?;
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [10_000usize, 100_000, 1_000_000])]
    sizes: Vec<usize>,
    /// Generators per grid, held fixed across sizes.
    #[arg(long, default_value_t = 100)]
    gens: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 3.0)]
    degree: f64,
    /// Runs per size; the fastest counts.
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    /// Time this network/snapshot pair instead of random grids.
    #[arg(long, requires = "snapshot")]
    net: Option<PathBuf>,
    #[arg(long, requires = "net")]
    snapshot: Option<PathBuf>,
}

pub fn bench(g: &Global, args: &BenchArgs) -> anyhow::Result<ExitCode> {
    let mut csv = String::from("n_buses,n_lines,graph_size,seconds\n");
    if let (Some(net_path), Some(snap_path)) = (&args.net, &args.snapshot) {
        let net = parse_network(net_path)?;
        let snap = parse_snapshot_with(snap_path, &net, &g.snapshot_options())?;
        let (elapsed, size) = time_pipeline(&net, &snap, &g.orient_options(), &g.table()?, args.repeats)?;
        csv += &format!("{},{},{},{:e}\n", net.buses().len(), net.lines().len(), size, elapsed.as_secs_f64());
        print!("{csv}");
    } else {
        let rows = bench_sizes(&args.sizes, args.gens, args.seed, args.degree, args.repeats)?;
        for r in &rows {
            csv += &format!("{},{},{},{:e}\n", r.n_buses, r.n_lines, r.graph_size, r.seconds);
        }
        print!("{csv}");
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.graph_size as f64, r.seconds)).collect();
        if let Some(s) = loglog_slope(&pts) {
            println!("# log-log slope {s:.3}");
        }
    }
    write_atomic(&g.out.join("bench.csv"), csv.as_bytes())?;
    Ok(ExitCode::SUCCESS)
}

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use gridcarbon::flowgraph::{LossPolicy, OrientOptions};
use gridcarbon::model::{EmissionTable, FuelType, NegativeLoadPolicy, SnapshotOptions, Tolerance};

#[derive(Parser, Debug)]
#[command(name = "gridcarbon", version, about = "Locational carbon emission tracing for power-flow snapshots")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Global {
    /// Drop line flows below this magnitude (MW).
    #[arg(long, global = true, default_value_t = 1e-6)]
    eps: f64,
    /// Bus imbalance handling: strict, absorb, or slack:<fuel>.
    #[arg(long, global = true, default_value = "absorb")]
    loss_policy: LossPolicy,
    /// Balance tolerance as `abs` or `abs,rel` (MW, fraction).
    #[arg(long, global = true, value_parser = parse_tolerance, default_value = "1e-6,1e-6")]
    tol: Tolerance,
    /// Worker threads for batch mode.
    #[arg(short = 'j', long = "jobs", global = true, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    jobs: u16,
    /// Emission-rate table (`fuel,rate_t_per_mwh`) replacing the built-in one.
    #[arg(long, global = true)]
    emissions: Option<PathBuf>,
    /// Turn negative loads into sources of this fuel instead of rejecting them.
    #[arg(long, global = true)]
    negative_load_fuel: Option<FuelType>,
    /// Output directory.
    #[arg(short = 'o', long = "out", global = true, default_value = ".")]
    out: PathBuf,
}

impl Global {
    fn orient_options(&self) -> OrientOptions {
        OrientOptions {
            eps: self.eps,
            policy: self.loss_policy.clone(),
            tol: self.tol,
        }
    }

    fn snapshot_options(&self) -> SnapshotOptions {
        SnapshotOptions {
            negative_loads: match &self.negative_load_fuel {
                Some(f) => NegativeLoadPolicy::ConvertToSource(f.clone()),
                None => NegativeLoadPolicy::Reject,
            },
        }
    }

    fn table(&self) -> anyhow::Result<EmissionTable> {
        match &self.emissions {
            Some(path) => Ok(EmissionTable::from_csv_path(path)?),
            None => Ok(EmissionTable::default()),
        }
    }
}

fn parse_tolerance(s: &str) -> Result<Tolerance, String> {
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite() && *v >= 0.0)
            .ok_or_else(|| format!("invalid tolerance \"{t}\""))
    };
    match s.split_once(',') {
        Some((a, r)) => Ok(Tolerance { abs: num(a)?, rel: num(r)? }),
        None => Ok(Tolerance { abs: num(s)?, rel: 0.0 }),
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check nodal balance of a snapshot; writes validation.json.
    Validate {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        snapshot: PathBuf,
    },
    /// Trace emissions; writes trace.json and report.csv.
    Trace(commands::TraceArgs),
    /// Marginal emission rate from a base/perturbed snapshot pair; writes lme.json.
    Lme {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        perturbed: PathBuf,
        #[arg(long)]
        bus: String,
        /// Accept load changes at several buses (divides by their sum).
        #[arg(long)]
        allow_multi_bus: bool,
    },
    /// Generate a consistent network.json + snapshot.json pair.
    Synth(commands::SynthArgs),
    /// Regional report from trace.json, series metrics, import-rate fit.
    Aggregate(commands::AggregateArgs),
    /// Time orient + SCC + trace on random grids; prints CSV and log-log slope.
    Bench(commands::BenchArgs),
}

/// Exit status for an error: 2 for unreadable or malformed input, 1 otherwise.
/// The context chain joined by ": ", skipping causes whose text the
/// wrapping error already embeds.
pub(crate) fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn exit_status(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<gridcarbon::model::ModelError>() {
            if e.is_input_error() {
                return 2;
            }
        }
        if let Some(e) = cause.downcast_ref::<gridcarbon::Error>() {
            if e.is_input_error() {
                return 2;
            }
        }
        if cause.downcast_ref::<commands::UsageError>().is_some() {
            return 2;
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let g = &cli.global;
    std::fs::create_dir_all(&g.out).with_context(|| format!("creating {}", g.out.display()))?;
    match cli.command {
        Command::Validate { net, snapshot } => commands::validate(g, &net, &snapshot),
        Command::Trace(args) => commands::trace(g, &args),
        Command::Lme {
            net,
            base,
            perturbed,
            bus,
            allow_multi_bus,
        } => commands::lme(g, &net, &base, &perturbed, &bus, allow_multi_bus),
        Command::Synth(args) => commands::synth(g, &args),
        Command::Aggregate(args) => commands::aggregate(g, &args),
        Command::Bench(args) => commands::bench(g, &args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {}", describe(&err));
            ExitCode::from(exit_status(&err))
        }
    }
}

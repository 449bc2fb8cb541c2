//! Command-line front end: argument model, result files and parameter sweeps.

mod output;
mod sweep;

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::scenario::{preset, preset_names, Scenario, ScenarioError};
use crate::sim::{run_traced, MetricsReport, SimError};
use crate::timebase::Nanos;

pub use output::{summary_toml, write_report, OutputFiles};
pub use sweep::{
    apply_sweep_value, parse_sweep, point_seed, run_sweep, SweepKey, SweepPoint, SweepSpec,
};

/// Writes to stdout, ignoring a closed pipe so `| head` does not panic.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

macro_rules! say {
    ($($arg:tt)*) => {
        emit(&format!("{}\n", format_args!($($arg)*)))
    };
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid --sweep: {0}")]
    Sweep(String),
    #[error("{0}")]
    Usage(String),
    #[error("{count} invariant violation(s) with --strict: {detail}")]
    Strict { count: u64, detail: String },
}

impl CliError {
    /// 2 for bad input, 1 for failures during or after the run.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Scenario(_) | CliError::Sweep(_) | CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "slotsync",
    version,
    about = "Beacon-synchronized TDMA simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write result files.
    Run(RunArgs),
    /// List the built-in presets.
    Presets,
    /// Check a scenario file and print its normalized form.
    Validate {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, conflicts_with = "scenario")]
        preset: Option<String>,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario TOML file.
    #[arg(long, required_unless_present = "preset")]
    pub scenario: Option<PathBuf>,
    /// Built-in preset name.
    #[arg(long, conflicts_with = "scenario")]
    pub preset: Option<String>,
    /// Master seed; defaults to the scenario's own.
    #[arg(long, value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// KEY=V1,V2,... over t_adv, drift_ppm, beta, guard_samples, detection_jitter.
    #[arg(long)]
    pub sweep: Option<String>,
    /// Also write trace.txt with one line per executed event.
    #[arg(long)]
    pub dump_trace: bool,
    /// Fail when any runtime invariant was violated.
    #[arg(long)]
    pub strict: bool,
    /// Fixed advance time for every node, e.g. `2ms`.
    #[arg(long, value_parser = Nanos::parse)]
    pub t_adv: Option<Nanos>,
}

fn load(scenario: Option<&Path>, preset_name: Option<&str>) -> Result<Scenario, CliError> {
    match (scenario, preset_name) {
        (Some(p), _) => Ok(Scenario::from_path(p)?),
        (None, Some(n)) => Ok(preset(n)?),
        (None, None) => Err(CliError::Usage("pass --scenario or --preset".into())),
    }
}

fn check_strict(report: &MetricsReport) -> Result<(), CliError> {
    let inv = &report.invariants;
    let count = inv.total_violations();
    if count == 0 {
        return Ok(());
    }
    Err(CliError::Strict {
        count,
        detail: format!(
            "overlaps={} conservation={} beacon_arrival={} freshness={}",
            inv.overlaps,
            inv.conservation_violations,
            inv.beacon_arrival_violations,
            inv.freshness_violations
        ),
    })
}

/// Executes one parsed command, printing a short summary to stdout.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Presets => {
            for name in preset_names() {
                say!("{name}");
            }
            Ok(())
        }
        Command::Validate { scenario, preset } => {
            let sc = load(scenario.as_deref(), preset.as_deref())?;
            emit(&sc.to_toml()?);
            Ok(())
        }
        Command::Run(args) => run(args),
    }
}

fn run(args: RunArgs) -> Result<(), CliError> {
    let mut sc = load(args.scenario.as_deref(), args.preset.as_deref())?;
    if let Some(t) = args.t_adv {
        sc.set_t_adv(t);
    }
    let seed = args.seed.unwrap_or(sc.seed);
    std::fs::create_dir_all(&args.out).map_err(|source| CliError::Io {
        path: args.out.display().to_string(),
        source,
    })?;

    if let Some(text) = &args.sweep {
        let spec = parse_sweep(text)?;
        let points = run_sweep(&sc, seed, &spec, &args.out, args.dump_trace)?;
        for p in &points {
            say!(
                "{}={} seed={} late_drops={} missed_beacons={} violations={}",
                spec.key,
                p.value,
                p.seed,
                p.report.late_drops,
                p.report.missed_beacons,
                p.report.invariants.total_violations()
            );
        }
        if args.strict {
            for p in &points {
                check_strict(&p.report)?;
            }
        }
        return Ok(());
    }

    let (report, trace) = run_traced_if(&sc, seed, args.dump_trace)?;
    let files = write_report(
        &args.out,
        &report,
        args.dump_trace.then_some(trace.as_slice()),
    )?;
    emit(&summary_toml(&report)?);
    if let Some(r) = &report.rtt {
        let p = &r.percentiles;
        say!(
            "# rtt p50={} p99={} max={}",
            Nanos(p.p50),
            Nanos(p.p99),
            Nanos(p.max)
        );
    }
    say!("# wrote {}", files.summary.display());
    if args.strict {
        check_strict(&report)?;
    }
    Ok(())
}

pub(crate) fn run_traced_if(
    sc: &Scenario,
    seed: u64,
    trace: bool,
) -> Result<(MetricsReport, Vec<String>), CliError> {
    if trace {
        Ok(run_traced(sc, seed)?)
    } else {
        Ok((crate::sim::run_scenario(sc, seed)?, Vec::new()))
    }
}

//! `sigfree`: bounds, simulations, sweeps, stability regions, micro-simulation
//! and drift probes for a two-class signal-free intersection.
//!
//! Exit codes: 0 success, 2 validation error, 3 runtime error.

mod commands;
mod config;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;
use output::OutputDir;

/// Environment variable naming the default output directory.
const OUTPUT_DIR_ENV: &str = "SIGFREE_OUTPUT_DIR";
const DEFAULT_OUTPUT_DIR: &str = "sigfree-out";

#[derive(Debug)]
pub enum CliError {
    /// Bad input: schema, ranges, model invariants. Exit code 2.
    Validation(String),
    /// Failure while running or writing results. Exit code 3.
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl From<sigfree_core::Error> for CliError {
    fn from(e: sigfree_core::Error) -> Self {
        use sigfree_core::Error as E;
        match e {
            E::InvalidHeadway(_)
            | E::InvalidCrossingTime(_)
            | E::InvalidDemand(_)
            | E::InvalidConfig(_)
            | E::InvalidApproach(_)
            | E::WrongPolicy { .. } => CliError::Validation(e.to_string()),
            E::NegativeStep(_) | E::InfeasibleState(_) | E::DepartureBeforeArrival { .. } | E::SafetyViolation { .. } => {
                CliError::Runtime(e.to_string())
            }
        }
    }
}

#[derive(Parser)]
#[command(name = "sigfree", version, about = "Signal-free intersection sequencing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stability margins and delay bounds at the configured demand point.
    Bounds(Common),
    /// Event-driven simulation of every configured policy at the demand point.
    Simulate(Common),
    /// Mean delay over the demand grid for every policy.
    Sweep(Common),
    /// Stability boundary of every policy along demand rays.
    Region(Common),
    /// Crossing-window scheduling with vehicle kinematics on one shared arrival sample.
    MicroSim(Common),
    /// FIFO Lyapunov drift in closed form and by Monte Carlo.
    DriftProbe(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON, schema version 1).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `sim.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for parallel work.
    #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
    jobs: Option<u16>,
    /// Output directory. Defaults to `output_dir` from the config, then
    /// $SIGFREE_OUTPUT_DIR, then ./sigfree-out.
    #[arg(long)]
    output: Option<PathBuf>,
}

impl Common {
    fn output_dir(&self, cfg: &ExperimentConfig) -> PathBuf {
        self.output
            .clone()
            .or_else(|| cfg.output_dir.clone())
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }
}

fn execute(command: &Command) -> Result<(), CliError> {
    let common = match command {
        Command::Bounds(c)
        | Command::Simulate(c)
        | Command::Sweep(c)
        | Command::Region(c)
        | Command::MicroSim(c)
        | Command::DriftProbe(c) => c,
    };
    let cfg = ExperimentConfig::load(&common.config)?;
    let seed = common.seed.unwrap_or(cfg.sim.seed);
    let mut out = OutputDir::create(common.output_dir(&cfg))?;
    let run = |out: &mut OutputDir| match command {
        Command::Bounds(_) => commands::bounds(&cfg, out),
        Command::Simulate(_) => commands::simulate(&cfg, seed, out),
        Command::Sweep(_) => commands::sweep(&cfg, seed, out),
        Command::Region(_) => commands::region(&cfg, out),
        Command::MicroSim(_) => commands::micro_sim(&cfg, seed, out),
        Command::DriftProbe(_) => commands::drift_probe_cmd(&cfg, seed, out),
    };
    match common.jobs {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n as usize)
                .build()
                .map_err(|e| CliError::Runtime(format!("cannot start {n} worker threads: {e}")))?;
            pool.install(|| run(&mut out))?;
        }
        None => run(&mut out)?,
    }
    for p in &out.written {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sigfree: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

//! `pepakit` command-line front end.
//!
//! Exit codes: 0 success, 1 usage, 2 model error, 3 analysis error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "pepakit", version, about = "Numerical vector analysis of PEPA models")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "lowercase")]
enum Cmd {
    /// Validate a model and list its local derivatives
    Parse(Common),
    /// Activity matrices C, C^Pre, C^Post and rate functions
    Matrix(Common),
    /// Reachable states, edges and the state-space bound
    States(Common),
    /// Steady-state distribution
    Steady(Common),
    /// Transient distribution from the initial state
    Transient(TimeArgs),
    /// Stochastic simulation with reward averages
    Simulate(SimArgs),
    /// Fluid ODE trajectory
    Ode(TimeArgs),
    /// Scaled SSA paths against the fluid limit
    Kurtz(KurtzArgs),
    /// Underlying P/T net and its P-invariants
    Ptnet(Common),
}

#[derive(Args, Serialize, Clone)]
struct Common {
    /// Model file
    model: PathBuf,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override a rate binding, `name=value` (value may be `infty`)
    #[arg(long = "rate", value_name = "NAME=VALUE")]
    rates: Vec<String>,
    /// Multiply every population by N
    #[arg(long, value_name = "N")]
    scale: Option<u64>,
    /// Maximum number of states to enumerate
    #[arg(long, value_name = "STATES", default_value_t = pepakit::statespace::DEFAULT_STATE_CAP)]
    cap: usize,
}

#[derive(Args, Serialize)]
struct TimeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    /// End time
    #[arg(long, default_value_t = 10.0)]
    t_max: f64,
    /// Step size (default 1e-3 * t_max)
    #[arg(long)]
    dt: Option<f64>,
}

#[derive(Args, Serialize)]
struct SimArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10_000.0)]
    t_max: f64,
    /// Warm-up as a fraction of t_max
    #[arg(long, default_value_t = 0.1)]
    warmup: f64,
    /// `state:U=c,...`, `throughput:<label>` or `throughput:<action>`
    #[arg(long = "reward", value_name = "SPEC")]
    rewards: Vec<String>,
    #[arg(long, default_value_t = 1)]
    replications: usize,
    /// Write the first replication's path sampled every DT
    #[arg(long, value_name = "DT")]
    sample_dt: Option<f64>,
    /// Stop early once checkpoint averages change by at most this fraction
    #[arg(long, value_name = "TOL")]
    rel_tol: Option<f64>,
}

#[derive(Args, Serialize)]
struct KurtzArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10.0)]
    t_max: f64,
    #[arg(long, default_value_t = 20)]
    replications: usize,
    /// Increasing population multipliers
    #[arg(long, value_delimiter = ',', default_value = "1,10,100")]
    n_list: Vec<u64>,
}

/// A failure with its exit code.
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(module: &str, e: impl std::fmt::Display) -> Self {
        Failure { code: 1, message: format!("{module}: {e}") }
    }

    pub fn model(module: &str, e: impl std::fmt::Display) -> Self {
        Failure { code: 2, message: format!("{module}: {e}") }
    }

    pub fn analysis(module: &str, e: impl std::fmt::Display) -> Self {
        Failure { code: 3, message: format!("{module}: {e}") }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match commands::dispatch(&cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("pepakit: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

//! Command-line front end for the order book model.
//!
//! Every subcommand reads an optional TOML config file, applies flag
//! overrides, writes CSV tables and a `manifest.json` into the output
//! directory and prints a short summary on stdout.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use lobfluid_core::experiments::ExperimentError;
use lobfluid_core::fixed_point::FixedPointError;
use lobfluid_core::ode::OdeError;
use lobfluid_core::sim::SimError;
use thiserror::Error;

pub use config::{ConfigError, Method};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_BUDGET: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "lobfluid", version, about = "Order book CTMC, fluid limit and fixed point tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration file; flags take precedence over its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory receiving all output files.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Master seed for every random stream.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of price levels N.
    #[arg(long)]
    n: Option<usize>,
    /// Per-trader move rate.
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    /// Per-trader quit rate.
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    /// Trade rate.
    #[arg(long, allow_negative_numbers = true)]
    gamma: Option<f64>,
    /// Buyer arrival rate at level 1.
    #[arg(long, allow_negative_numbers = true)]
    lambda_b: Option<f64>,
    /// Seller arrival rate at level N.
    #[arg(long, allow_negative_numbers = true)]
    lambda_s: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the scaled CTMC on a time grid.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scale: Option<u64>,
        #[arg(long, allow_negative_numbers = true)]
        tau_max: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        sample_dt: Option<f64>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        x0: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        y0: Option<Vec<f64>>,
        #[arg(long)]
        max_events: Option<u64>,
        #[arg(long)]
        verify_rates: bool,
    },
    /// Integrate the fluid ODEs.
    Integrate {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_negative_numbers = true)]
        tau_max: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        tol: Option<f64>,
        /// Output grid step; without it every accepted step is written.
        #[arg(long, allow_negative_numbers = true)]
        sample_dt: Option<f64>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        x0: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        y0: Option<Vec<f64>>,
    },
    /// Solve for the fixed point of the fluid ODEs.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        method: Option<Method>,
        /// Stopping tolerance of the recursive solver.
        #[arg(long, allow_negative_numbers = true)]
        tol: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
    },
    /// Distance between simulated and fluid paths across scaling levels.
    Converge {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<u64>>,
        #[arg(long)]
        replicas: Option<usize>,
        #[arg(long, allow_negative_numbers = true)]
        horizon: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        grid_fraction: Option<f64>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        x0: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        y0: Option<Vec<f64>>,
        #[arg(long)]
        max_events: Option<u64>,
    },
    /// Distance of long-run samples from the fixed point.
    Equilibrium {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<u64>>,
        #[arg(long, allow_negative_numbers = true)]
        burn_in: Option<f64>,
        #[arg(long)]
        n_samples: Option<usize>,
        #[arg(long, allow_negative_numbers = true)]
        sample_gap: Option<f64>,
        #[arg(long)]
        max_events: Option<u64>,
    },
    /// Fixed point summaries over a grid of seller arrival rates.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        lambda_s_values: Option<Vec<f64>>,
        /// Largest accepted residual.
        #[arg(long, allow_negative_numbers = true)]
        tol: Option<f64>,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("budget exhausted: {0}")]
    Budget(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Solver(_) => EXIT_SOLVER,
            CliError::Budget(_) => EXIT_BUDGET,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

fn input_error(e: impl std::fmt::Display) -> CliError {
    CliError::Config(config::invalid("input", e.to_string()))
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::BudgetExceeded { .. } => CliError::Budget(e.to_string()),
            _ => input_error(e),
        }
    }
}

impl From<OdeError> for CliError {
    fn from(e: OdeError) -> Self {
        match e {
            OdeError::InvalidInput(_) | OdeError::State(_) | OdeError::HypothesisViolated { .. } => input_error(e),
            _ => CliError::Solver(e.to_string()),
        }
    }
}

impl From<FixedPointError> for CliError {
    fn from(e: FixedPointError) -> Self {
        match e {
            FixedPointError::InvalidInput(_) => input_error(e),
            _ => CliError::Solver(e.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Sim(e) => e.into(),
            ExperimentError::Ode(e) => e.into(),
            ExperimentError::FixedPoint(e) => e.into(),
            ExperimentError::Param(_) | ExperimentError::InvalidInput(_) => input_error(e),
            ExperimentError::ResidualTooLarge { .. } => CliError::Solver(e.to_string()),
        }
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

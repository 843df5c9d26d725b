//! Command-line front end.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;

pub use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NO_SOLUTION: i32 = 2;
pub const EXIT_UNSUPPORTED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "phiperiodic", version, about = "Periodic and Neumann problems for phi-Laplacian Liénard equations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Parameter value, overriding the config.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub s: Option<f64>,
    /// Output directory, overriding `[output] dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Number of grid cells.
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    /// Seed for the warm-start jitter.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Constant initial guess for `solve`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub guess: Option<f64>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Solve the periodic problem at one parameter value.
    Solve,
    /// Locate the thresholds and check the alternative.
    Threshold,
    /// Count solutions over the parameter grid and trace branches.
    Sweep,
    /// Solve the radial Neumann problem on the annulus.
    Neumann,
    /// Print the hypothesis report.
    Check,
}

/// Maps an error to the exit-code contract.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Expr(_) | Error::UnknownExample(_) | Error::InvalidPhi(_) | Error::InvalidGrid(_)
        | Error::InvalidProblem(_) => EXIT_CONFIG,
        Error::UnsupportedFamily => EXIT_UNSUPPORTED,
        _ => EXIT_NO_SOLUTION,
    }
}

pub fn init_logging() {
    let env = env_logger::Env::new().filter_or("PHIPERIODIC_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).target(env_logger::Target::Stderr).try_init();
}

/// Parses `args` and runs the subcommand, returning the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(cli.command, &cli.common) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

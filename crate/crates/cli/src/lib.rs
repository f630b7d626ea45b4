//! Command-line front end for `vdmfg`.
//!
//! Exit codes: 0 success, 1 solver failure (outputs still written with
//! `failed` markers), 2 usage error.

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;

use clap::Parser;
use thiserror::Error;

use config::{Cli, Command};

pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Solver(#[from] vdmfg::Error),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Solver(vdmfg::Error::InvalidInput(_)) => EXIT_USAGE,
            _ => commands::EXIT_FAILED,
        }
    }
}

pub fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Solve { epsilon, grid, physics, out } => commands::solve(epsilon, &grid, &physics, &out),
        Command::Sweep { epsilon_list, tied, grid, physics, out } => commands::sweep(&epsilon_list, tied, &grid, &physics, &out),
        Command::Corrector { base, epsilon_list, grid, physics, out } => {
            commands::corrector(&base, &epsilon_list, &grid, &physics, &out)
        }
        Command::Example { kind, grid, out } => commands::example(kind, &grid, &out),
        Command::Select { model, eps_ladder, sigma_per_eps, delta_per_eps, selection_tol, grid, out } => {
            commands::select(model, &eps_ladder, sigma_per_eps, delta_per_eps, selection_tol, &grid, &out)
        }
        Command::Verify { epsilon, grid, physics, out } => commands::verify(epsilon, &grid, &physics, out.as_deref()),
    }
}

/// Parses `args` and runs; returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

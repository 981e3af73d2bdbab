//! The `fair` command line.
//!
//! Exit status is 0 on success, 1 for operational failures (I/O, unreadable
//! files, numeric aborts) and 2 for usage or validation failures (bad flags,
//! bad config, datasets or configs that violate an invariant).

pub mod args;
pub mod commands;
pub mod config;

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::Parser;
use fair_core::Execution;
use thiserror::Error;

use crate::args::Cli;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Operational(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Validation(_) => 2,
            CliError::Operational(_) => 1,
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.workers {
        Some(1) => commands::execute(cli.command, Execution::Sequential),
        Some(n) => with_pool(n as usize, move || commands::execute(cli.command, Execution::Parallel)),
        None => commands::execute(cli.command, Execution::Parallel),
    }
}

#[cfg(feature = "parallel")]
fn with_pool<F>(threads: usize, f: F) -> Result<(), CliError>
where
    F: FnOnce() -> Result<(), CliError> + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Operational(format!("cannot start {threads} workers: {e}")))?;
    pool.install(f)
}

#[cfg(not(feature = "parallel"))]
fn with_pool<F>(_threads: usize, f: F) -> Result<(), CliError>
where
    F: FnOnce() -> Result<(), CliError> + Send,
{
    log::debug!("built without the parallel feature; running on one thread");
    f()
}

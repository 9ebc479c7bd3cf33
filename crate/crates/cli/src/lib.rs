//! Front end for the `parrondo` binary: argument and config merging,
//! dispatch to the engines, CSV/JSON rendering and run manifests.
//!
//! Exit codes: 0 success, 1 I/O, 2 invalid input, 3 solver did not converge,
//! 4 an internal cross-check failed.

pub mod args;
pub mod commands;
pub mod config;
pub mod output;

use std::time::{Instant, SystemTime, UNIX_EPOCH};

use parrondo_core::Error;

use crate::args::{Cli, Command, Format};
use crate::config::ConfigFile;
use crate::output::Manifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_CROSSCHECK: i32 = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_IO,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NotConverged { .. } => EXIT_NOT_CONVERGED,
            Error::CrossCheck(_) => EXIT_CROSSCHECK,
            _ => EXIT_VALIDATION,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn default_format(command: &Command) -> Format {
    match command {
        Command::Ergodicity { .. } => Format::Json,
        _ => Format::Csv,
    }
}

/// Runs one invocation and returns the process exit code. Diagnostics go to
/// stderr.
pub fn run(cli: &Cli) -> i32 {
    match try_run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn try_run(cli: &Cli) -> Result<i32, CliError> {
    if let Some(t) = cli.common.threads {
        if t == 0 {
            return Err(CliError::validation("--threads must be at least 1"));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global();
    }
    let cfg = match &cli.common.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let clock = Instant::now();
    let outcome = commands::run(&cli.command, &cfg)?;
    let mut manifest = Manifest {
        tool: "parrondo",
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command.name().to_string(),
        schema: Manifest::schema_for(cli.command.name()),
        parameters: outcome.parameters,
        seed: outcome.seed,
        threads: rayon::current_num_threads(),
        started_unix_seconds: started,
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
        outputs: vec![],
    };
    let format = cli
        .common
        .format
        .unwrap_or_else(|| default_format(&cli.command));
    output::emit(
        &outcome.body,
        format,
        cli.common.out.as_deref(),
        &mut manifest,
    )?;
    for note in &outcome.notes {
        eprintln!("{note}");
    }
    Ok(outcome.status)
}

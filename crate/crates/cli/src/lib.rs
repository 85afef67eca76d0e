//! Command-line front end of `octrl`.
//!
//! [`run`] parses the arguments, dispatches the subcommand and returns the
//! process exit code:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success, every verdict in the report passed |
//! | 1 | a definitive FAIL verdict |
//! | 2 | usage or configuration error |
//! | 3 | numeric failure (bracketing, integration, evaluation) |
//!
//! When `--report` is given the JSON report is written for every outcome,
//! errors included.

mod args;
mod commands;
pub mod csvio;
pub mod report;

use std::ffi::OsString;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::Parser;

use args::Cli;
use report::{ErrorInfo, RunReport, Status};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug)]
pub(crate) enum CliError {
    Usage(String),
    Numeric(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }

    fn info(&self) -> ErrorInfo {
        match self {
            CliError::Usage(m) => ErrorInfo {
                kind: "usage",
                message: m.clone(),
            },
            CliError::Numeric(m) => ErrorInfo {
                kind: "numeric",
                message: m.clone(),
            },
        }
    }
}

impl From<octrl_core::problem::ProblemError> for CliError {
    fn from(e: octrl_core::problem::ProblemError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<octrl_core::Error> for CliError {
    fn from(e: octrl_core::Error) -> Self {
        match e {
            octrl_core::Error::InvalidArgument(_) => CliError::Usage(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<csvio::CsvError> for CliError {
    fn from(e: csvio::CsvError) -> Self {
        CliError::Usage(e.to_string())
    }
}

/// Runs the command line `args` (program name first) and returns the exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let echo: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    let config = commands::config_json(&cli.command);
    let mut report = RunReport::new(cli.command.name(), echo, config);
    let started = Instant::now();

    let result = commands::dispatch(&cli.command, &mut report);
    report.timings.insert("total".into(), started.elapsed().as_secs_f64());
    let code = match result {
        Ok(true) => {
            report.status = Status::Pass;
            EXIT_OK
        }
        Ok(false) => {
            report.status = Status::Fail;
            EXIT_FAIL
        }
        Err(e) => {
            eprintln!("error: {}", e.info().message);
            report.status = Status::Error;
            report.error = Some(e.info());
            e.exit_code()
        }
    };
    report.exit_code = code;

    if let Some(path) = commands::report_path(&cli.command) {
        if let Err(e) = std::fs::write(path, report.to_json()) {
            eprintln!("error: cannot write report {}: {e}", path.display());
            return EXIT_USAGE;
        }
    }
    let verdict = match report.status {
        Status::Pass => "PASS",
        Status::Fail => "FAIL",
        Status::Error => "ERROR",
    };
    println!("{}: {verdict} (exit {code})", report.command);
    code
}

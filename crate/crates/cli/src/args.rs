use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "octrl",
    version,
    about = "Solve and verify scalar infinite-horizon optimal control problems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the sampled assumption checks on a problem.
    Check(CheckArgs),
    /// Shoot for the optimal initial consumption and integrate the path.
    Solve(SolveArgs),
    /// Check necessary and sufficient conditions on a path read from CSV.
    Verify(VerifyArgs),
    /// Cross-check the solver against backward induction on a grid.
    Oracle(OracleArgs),
    /// Solve over a range of one parameter.
    Sweep(SweepArgs),
    /// Closed-form consumer-saving instance: solve, verify and compare.
    Example1(Example1Args),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Check(_) => "check",
            Command::Solve(_) => "solve",
            Command::Verify(_) => "verify",
            Command::Oracle(_) => "oracle",
            Command::Sweep(_) => "sweep",
            Command::Example1(_) => "example1",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ProblemArgs {
    /// Problem file (TOML).
    #[arg(long)]
    pub problem: PathBuf,
    /// Override a parameter of the problem file, `name=value`; repeatable.
    #[arg(long = "set", value_name = "NAME=VALUE", value_parser = parse_assignment)]
    pub set: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutputArgs {
    /// Write the JSON run report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Log,
    Crra,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CertificateArgs {
    /// Built-in scaling certificate for the utility family.
    #[arg(long, value_enum)]
    pub family: Option<Family>,
    /// Relative risk aversion for `--family crra`.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub lambda_bar: f64,
    /// Sample points per axis of the assumption checks.
    #[arg(long, default_value_t = 64)]
    pub grid: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CheckArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub certificate: CertificateArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ShootArgs {
    /// Shooting horizon; default chosen from theta and --tol-tvc.
    #[arg(long = "T")]
    pub horizon: Option<f64>,
    #[arg(long, default_value_t = 1e-10)]
    pub tol_c0: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub tol_tvc: f64,
    /// Points of the reported trajectory.
    #[arg(long, default_value_t = 10001)]
    pub n_report: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub shoot: ShootArgs,
    /// Write the trajectory CSV here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Path CSV with columns t, x, c and optionally lambda.
    #[arg(long)]
    pub path: PathBuf,
    #[command(flatten)]
    pub certificate: CertificateArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalRule {
    /// Pin x(T) to the solver's x(T) (or --pin).
    Pin,
    Free,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OracleArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long = "T", default_value_t = 100.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 0.05)]
    pub dt: f64,
    #[arg(long, default_value_t = 400)]
    pub nx: usize,
    #[arg(long)]
    pub x_min: Option<f64>,
    #[arg(long)]
    pub x_max: Option<f64>,
    #[arg(long, value_enum, default_value_t = TerminalRule::Pin)]
    pub terminal: TerminalRule,
    /// Explicit terminal value for `--terminal pin`.
    #[arg(long)]
    pub pin: Option<f64>,
    /// Write the value and policy tables here.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Write the greedy path CSV here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Parameter of the problem file to vary.
    #[arg(long)]
    pub param: String,
    #[arg(long)]
    pub from: f64,
    #[arg(long)]
    pub to: f64,
    #[arg(long, default_value_t = 5)]
    pub n: usize,
    #[command(flatten)]
    pub shoot: ShootArgs,
    /// Write the aggregated CSV here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Example1Args {
    #[arg(long = "R", default_value_t = 0.05)]
    pub r: f64,
    #[arg(long, default_value_t = 0.03)]
    pub theta: f64,
    #[arg(long, default_value_t = 0.2)]
    pub omega: f64,
    #[arg(long, default_value_t = 1.0)]
    pub x0: f64,
    #[arg(long = "T", default_value_t = 600.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 20_000)]
    pub nodes: usize,
    /// Write the closed-form path CSV here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn parse_assignment(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected NAME=VALUE, got \"{s}\""))?;
    let value: f64 = value.trim().parse().map_err(|e| format!("bad value in \"{s}\": {e}"))?;
    Ok((name.trim().to_string(), value))
}

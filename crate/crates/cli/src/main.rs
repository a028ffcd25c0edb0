//! `qsd`: classify, solve and simulate killed one-dimensional diffusions.
//!
//! Exit status: 0 on success, 2 for configuration or usage errors, 3 for a
//! numerical failure, 4 for an ambiguous verdict under `--strict`.

mod artifacts;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "qsd", version, about = "Quasistationary analysis of killed one-dimensional diffusions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Feller classification of both endpoints and the growth conditions.
    Classify(ModelArgs),
    /// Principal eigenvalue, eigenfunction and QSD.
    Eigen(EigenArgs),
    /// First eigenvalues on a finite interval.
    Spectrum(SpectrumArgs),
    /// Monte Carlo survival curve and conditional histograms.
    Simulate(SimulateArgs),
    /// Long-run verdict, optionally checked by simulation.
    Verdict(VerdictArgs),
    /// Closed-form solution for geometric diffusion with proportional killing.
    Lebras(LebrasArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Model config with `key = value` lines.
    pub config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Override a config key; takes precedence over the file.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_assignment)]
    pub set: Vec<(String, String)>,
}

#[derive(Debug, Clone, Args)]
pub struct EigenArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Relative bisection tolerance for λ̲.
    #[arg(long, default_value_t = 1e-10)]
    pub lambda_tol: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Truncation point in unit coordinates; defaults to the right endpoint.
    #[arg(long)]
    pub r: Option<f64>,
    /// Number of eigenvalues.
    #[arg(long, default_value_t = 5)]
    pub n: usize,
}

#[derive(Debug, Clone, Args)]
pub struct McArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, default_value_t = 10.0)]
    pub tmax: f64,
    /// Starting point in unit coordinates; defaults to the reference point.
    #[arg(long)]
    pub start: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub mc: McArgs,
    /// Histogram snapshot times; defaults to `tmax`.
    #[arg(long, value_delimiter = ',')]
    pub snapshots: Vec<f64>,
    /// Starting points for the survival ratio ω_t against the reference point.
    #[arg(long, value_delimiter = ',')]
    pub omega_x: Vec<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct VerdictArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub mc: McArgs,
    #[arg(long, default_value_t = 1e-10)]
    pub lambda_tol: f64,
    /// Run the simulation even when the spectral decision is clear.
    #[arg(long)]
    pub with_mc: bool,
    /// Exit with status 4 on an ambiguous verdict.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Clone, Args)]
pub struct LebrasArgs {
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub b: f64,
    #[arg(long, default_value_t = 1.0)]
    pub k: f64,
    /// Use `K′_{iy}(x0) = 0` in place of the zero-flux condition.
    #[arg(long)]
    pub derivative_zero: bool,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

fn parse_assignment(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("cannot write output: {0}")]
    Output(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Output(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

/// What a successful run asks the process to report.
pub enum Status {
    Done,
    AmbiguousStrict,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Classify(a) => commands::classify(&a),
        Command::Eigen(a) => commands::eigen(&a),
        Command::Spectrum(a) => commands::spectrum(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Verdict(a) => commands::verdict(&a),
        Command::Lebras(a) => commands::lebras(&a),
    };
    match result {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::AmbiguousStrict) => ExitCode::from(4),
        Err(e) => {
            eprintln!("qsd: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

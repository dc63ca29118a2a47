//! Command-line driver for the decoherence laboratory.
//!
//! Experiments are described by a TOML configuration file (model, analysis
//! parameters, output settings); each subcommand runs one analysis and
//! writes CSV/JSON reports plus a run manifest into the output directory:
//!
//! * `validate`   checks the configured model's physical invariants
//! * `pip`        tabulates partial-information curves ⟨χ(m)⟩ and ⟨I(m)⟩
//! * `redundancy` finds the smallest sufficient fragment and R_δ per (t, δ)
//! * `chernoff`   reports the typical error exponent and redundancy estimate
//! * `photon`     analyzes the photon-scattering sky model
//! * `selftest`   runs the built-in invariant suites (no config needed)
//!
//! Exit codes: 0 success, 1 usage/config/IO error, 2 numerical-invariant
//! failure. Worker count comes from `QDLAB_THREADS` (default: all cores);
//! results are bit-identical at any worker count.

mod config;
mod emit;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

/// Driver-level error taxonomy, mapped onto process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Unusable invocation or configuration (exit 1).
    #[error("{0}")]
    Config(String),
    /// A numerical or physical invariant failed (exit 2).
    #[error("{0}")]
    Invariant(String),
    /// An analysis could not run to completion (exit 1).
    #[error("{0}")]
    Analysis(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Invariant(_) => 2,
            CliError::Config(_) | CliError::Analysis(_) | CliError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "qdlab", version, about = "Decoherence and redundancy analyses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the configured model against its physical invariants.
    Validate(AnalysisArgs),
    /// Partial-information curves: fragment-averaged χ and I per size.
    Pip(AnalysisArgs),
    /// Redundancy R_δ and the per-size information table per (time, δ).
    Redundancy(AnalysisArgs),
    /// Typical error exponent, efficiency sandwich, redundancy estimate.
    Chernoff(AnalysisArgs),
    /// Photon sky model: overlap, decoherence time, receptivity, rate.
    Photon(AnalysisArgs),
    /// Run the built-in invariant suites and report each check.
    Selftest(SelftestArgs),
}

#[derive(Debug, clap::Args)]
struct AnalysisArgs {
    /// Experiment configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the sampler master seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: config `output.directory`, else ./qdlab-out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output formats (default: config `output.formats`, else both).
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Debug, clap::Args)]
struct SelftestArgs {
    /// Master seed for the randomized suites.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (default: ./qdlab-out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output formats (default: both).
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Both,
}

impl From<FormatArg> for emit::Formats {
    fn from(arg: FormatArg) -> emit::Formats {
        match arg {
            FormatArg::Csv => emit::Formats::Csv,
            FormatArg::Json => emit::Formats::Json,
            FormatArg::Both => emit::Formats::Both,
        }
    }
}

fn main() -> ExitCode {
    /* Clap's default exit code for usage errors is 2, which this tool
     * reserves for numerical-invariant failures; remap usage to 1. */
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = u8::from(e.use_stderr());
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Validate(args) => run::analysis(&args, run::Analysis::Validate),
        Command::Pip(args) => run::analysis(&args, run::Analysis::Pip),
        Command::Redundancy(args) => run::analysis(&args, run::Analysis::Redundancy),
        Command::Chernoff(args) => run::analysis(&args, run::Analysis::Chernoff),
        Command::Photon(args) => run::analysis(&args, run::Analysis::Photon),
        Command::Selftest(args) => run::selftest(&args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

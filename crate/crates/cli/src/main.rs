//! `rewa`: command-line front end for the rewa-core computations.
//!
//! Exit codes: 0 on success, 1 when `verify` finds a failing criterion,
//! 2 for usage errors and invalid inputs.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "rewa",
    version,
    about = "Witness-overlap encodings: information, capacity and retrieval experiments"
)]
pub struct Cli {
    /// Base seed; overrides the seed of a sweep config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Emit JSON instead of text/CSV.
    #[arg(long, global = true)]
    pub json: bool,
    /// Write the primary output to this file instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Reduced-trial acceptance suite.
    #[arg(long, global = true)]
    pub quick: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Overlap information of two witness sets.
    Mi(MiArgs),
    /// Per-overlap channel capacity and required code length.
    Capacity(CapacityArgs),
    /// Run an experiment sweep from a TOML config.
    Sweep(SweepArgs),
    /// Rate-distortion curve on a grid of distortion budgets.
    RdCurve(RdCurveArgs),
    /// Run the acceptance suite.
    Verify,
}

#[derive(Debug, Args)]
pub struct MiArgs {
    #[arg(long, requires_all = ["size_b", "delta"], conflicts_with_all = ["file_a", "file_b"])]
    pub size_a: Option<u64>,
    #[arg(long, requires = "size_a")]
    pub size_b: Option<u64>,
    #[arg(long, requires = "size_a")]
    pub delta: Option<u64>,
    /// Whitespace-separated witness names; `#` starts a comment.
    #[arg(long, requires = "file_b", required_unless_present = "size_a")]
    pub file_a: Option<PathBuf>,
    #[arg(long, requires = "file_a")]
    pub file_b: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CapacityArgs {
    /// Witness-set size.
    #[arg(long = "L", alias = "l")]
    pub l: u64,
    /// Hash functions per witness.
    #[arg(long = "K", alias = "k")]
    pub k: u64,
    /// Code length in bits.
    #[arg(long)]
    pub m: u64,
    /// Comma-separated overlaps.
    #[arg(long, value_delimiter = ',', required = true)]
    pub deltas: Vec<u64>,
    #[arg(long, default_value_t = 1024)]
    pub n_items: u64,
    /// Target error probability.
    #[arg(long, default_value_t = 0.1)]
    pub error: f64,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub config: PathBuf,
    /// Worker threads for the trial loop (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RdCurveArgs {
    #[arg(long)]
    pub n: u64,
    #[arg(long)]
    pub k: u64,
    #[arg(long, default_value_t = 1)]
    pub v: u64,
    /// Comma-separated distortion budgets; overrides `--eps-step`.
    #[arg(long, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
    /// Grid spacing over [0, 1).
    #[arg(long, default_value_t = 0.05)]
    pub eps_step: f64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(&cli) {
        Ok(status) => status,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

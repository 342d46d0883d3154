//! Command-line arguments. Every subcommand's arguments double as the run
//! configuration recorded in the manifest; the output directory is left out
//! so the same run replays to an identical manifest anywhere.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "ctxboot", version, about = "Context tree estimation with bootstrap-tuned penalties")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Fit a context tree to a symbol sequence.
    Fit(FitArgs),
    /// Emit penalty histogram and ratio data from a fit run.
    Figures(FiguresArgs),
    /// Simulate a sequence from a context tree model.
    Simulate(SimulateArgs),
    /// Simultaneous confidence bands for the column means of a CSV panel.
    Bands(BandsArgs),
    /// Check the Gaussian max-coupling on martingale designs.
    VerifyClt(VerifyArgs),
    /// Check the anti-concentration bound on Gaussian designs.
    VerifyAnticonc(VerifyArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct FitArgs {
    /// Sequence file; lines starting with '#' are ignored.
    #[arg(long)]
    pub input: PathBuf,
    /// Comma-separated alphabet, in the order used for output; inferred
    /// from first appearance when absent.
    #[arg(long)]
    pub alphabet: Option<String>,
    /// Token delimiter: auto, whitespace, char, or a literal separator.
    #[arg(long, default_value = "auto")]
    pub delimiter: String,
    /// Maximal context depth; defaults to ceil(log n / log |A|).
    #[arg(long = "h-star")]
    pub h_star: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    /// Bootstrap replicates.
    #[arg(long = "B", default_value_t = 1000)]
    pub replicates: usize,
    /// Pruning constant, must exceed 1.
    #[arg(long, default_value_t = 1.1)]
    pub c: f64,
    /// Tuning set: "sqrt" (N >= ceil(sqrt n)) or a minimum context count.
    #[arg(long, default_value = "sqrt")]
    pub tn: String,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct FiguresArgs {
    /// Output directory of a completed fit run.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// Model JSON file.
    #[arg(long, conflicts_with = "reference")]
    pub model: Option<PathBuf>,
    /// Built-in model: "order3" (binary, depth 3).
    #[arg(long)]
    pub reference: Option<String>,
    #[arg(long)]
    pub n: usize,
    #[arg(long = "burn-in")]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub seed: u64,
    /// Also write the model (with stationary leaf probabilities).
    #[arg(long = "emit-model")]
    pub emit_model: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct BandsArgs {
    /// CSV panel with a header row of column names.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    #[arg(long = "B", default_value_t = 1000)]
    pub replicates: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct VerifyArgs {
    /// JSON experiment config; a built-in grid is used when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

impl Command {
    pub fn out(&self) -> &PathBuf {
        match self {
            Self::Fit(a) => &a.out,
            Self::Figures(a) => &a.out,
            Self::Simulate(a) => &a.out,
            Self::Bands(a) => &a.out,
            Self::VerifyClt(a) | Self::VerifyAnticonc(a) => &a.out,
            Self::Replay(a) => &a.out,
        }
    }

    pub fn set_out(&mut self, out: PathBuf) {
        match self {
            Self::Fit(a) => a.out = out,
            Self::Figures(a) => a.out = out,
            Self::Simulate(a) => a.out = out,
            Self::Bands(a) => a.out = out,
            Self::VerifyClt(a) | Self::VerifyAnticonc(a) => a.out = out,
            Self::Replay(a) => a.out = out,
        }
    }
}

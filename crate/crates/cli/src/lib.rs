//! The `foldkit` command line: synthetic data, folding, encoder runs,
//! measurement sweeps and report merging.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, CommandFactory, Parser, Subcommand};
use serde::Serialize;

pub mod commands;
pub mod config;
pub mod report;

#[derive(Parser, Debug)]
#[command(
    name = "foldkit",
    version,
    about = "Token folding and information-loss measurement"
)]
pub struct Cli {
    /// `key = value` file supplying defaults for the subcommand's options.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic token sequence.
    Gen(GenArgs),
    /// Fold a token file down by `r` tokens.
    Fold(FoldArgs),
    /// Run the encoder with a reduction schedule.
    Simulate(SimulateArgs),
    /// Minimum token counts per block for energy thresholds.
    Energy(EnergyArgs),
    /// Exact transport distance between two token files.
    Emd(EmdArgs),
    /// Distance caused by reducing in one block at a time.
    Propagate(PropagateArgs),
    /// Distance per aggregation scheme for a reduction in one block.
    Aggsweep(AggsweepArgs),
    /// Distance per reduction schedule at a fixed total removal.
    Schedsweep(SchedsweepArgs),
    /// Merge sweep reports into tables.
    Report(ReportArgs),
    /// Re-run the command recorded in a report.
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct EncoderArgs {
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value_t = 12)]
    pub blocks: usize,
    #[arg(long, default_value_t = 4.0)]
    pub mlp_ratio: f64,
    /// Weight seed.
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Prepend a pinned class token.
    #[arg(long)]
    pub class_token: bool,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct MatchArgs {
    #[arg(long, default_value = "token", value_parser = ["token", "key", "turbo"])]
    pub matcher: String,
    /// Importance weight for the turbo matcher.
    #[arg(long, default_value_t = 5.0)]
    pub alpha: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct InputArgs {
    /// Token file: `.ftsq` binary, or `.csv` with one token per row.
    #[arg(long = "in", value_name = "FILE")]
    #[serde(rename = "in")]
    pub input: PathBuf,
    /// Pinned prefix length for CSV input.
    #[arg(long, default_value_t = 0)]
    pub pinned: usize,
    /// CSV input carries a leading size column.
    #[arg(long)]
    pub with_sizes: bool,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct GenArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 196)]
    pub n: usize,
    #[arg(long, default_value_t = 64)]
    pub d: usize,
    /// Mixing weight of the shared latent, in [0, 1).
    #[arg(long, default_value_t = 0.0)]
    pub correlation: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the tokens as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct FoldArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    /// Tokens to remove.
    #[arg(long)]
    pub r: usize,
    #[arg(long, default_value = "avg", value_parser = ["avg", "weighted", "drop"])]
    pub scheme: String,
    /// Output token file (`.ftsq` or `.csv`).
    #[arg(long)]
    pub out: PathBuf,
    /// JSON report with the fold trace.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub encoder: EncoderArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub matching: MatchArgs,
    #[arg(long, default_value = "avg", value_parser = ["avg", "weighted", "drop"])]
    pub scheme: String,
    /// `last1:R`, `lastN:k:R`, `uniform:R` or `explicit:r1,r2,…`.
    #[arg(long, default_value = "last1:0")]
    pub schedule: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for per-block activations.
    #[arg(long)]
    pub acts: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct EnergyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub encoder: EncoderArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.5,0.7,0.8,0.9,0.95,0.99"
    )]
    pub thresholds: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct EmdArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    /// CSV inputs carry a leading size column.
    #[arg(long)]
    pub with_sizes: bool,
    /// `uniform`, or `sizes` to weight each point by its token size.
    #[arg(long, default_value = "uniform", value_parser = ["uniform", "sizes"])]
    pub weights: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dump the coupling matrix as CSV.
    #[arg(long)]
    pub plan_csv: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct RemovalArgs {
    /// Reduction ratios of the reducible tokens, each in (0, 1).
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75")]
    pub ratios: Vec<f64>,
    /// Fixed removal counts; when given, these replace `--ratios`.
    #[arg(long = "r", value_delimiter = ',')]
    #[serde(rename = "r")]
    pub counts: Vec<usize>,
    #[arg(long, default_value = "uniform", value_parser = ["uniform", "sizes"])]
    pub weights: String,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct PropagateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub encoder: EncoderArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub matching: MatchArgs,
    #[arg(long, default_value = "avg", value_parser = ["avg", "weighted", "drop"])]
    pub scheme: String,
    #[command(flatten)]
    #[serde(flatten)]
    pub removal: RemovalArgs,
    /// 1-based blocks to reduce in (default: all).
    #[arg(long = "at", value_delimiter = ',')]
    #[serde(rename = "at")]
    pub at_blocks: Vec<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct AggsweepArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub encoder: EncoderArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub matching: MatchArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub removal: RemovalArgs,
    /// 1-based block to reduce in (default: the last).
    #[arg(long = "at")]
    #[serde(rename = "at")]
    pub at_block: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SchedsweepArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub encoder: EncoderArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub matching: MatchArgs,
    #[arg(long, default_value = "avg", value_parser = ["avg", "weighted", "drop"])]
    pub scheme: String,
    /// `last1`, `lastK`, `uniform`, or full schedule specs.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "last1,last2,last3,uniform"
    )]
    pub schedules: Vec<String>,
    /// Total removal as a share of the reducible tokens.
    #[arg(long, default_value_t = 0.6)]
    pub ratio: f64,
    /// Total removal count; replaces `--ratio` when given.
    #[arg(long)]
    pub total: Option<usize>,
    #[arg(long, default_value = "uniform", value_parser = ["uniform", "sizes"])]
    pub weights: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ReportArgs {
    /// Sweep reports to merge.
    #[arg(long, num_args = 1.., required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for one CSV per merged table.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ReplayArgs {
    /// Report whose embedded config is re-run.
    #[arg(long)]
    pub from: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses and runs a full argument list (program name first); returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let argv = match config::expand_argv(&Cli::command(), argv) {
        Ok(a) => a,
        Err(e) => return fail(&e),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => fail(&e),
    }
}

fn fail(e: &foldkit_core::FoldError) -> i32 {
    eprintln!("foldkit: {e}");
    e.exit_code()
}

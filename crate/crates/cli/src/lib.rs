//! `pdiff` command-line surface.
//!
//! Every subcommand reads its inputs from files, writes one artifact
//! (atomically, when `--out` is given) and maps failures onto stable exit
//! codes: 2 for configuration errors, 3 for failed verification, 4 for an
//! exhausted evaluation budget and 1 for anything else.

mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use pdiff_core::aggregate::AggregateError;
use pdiff_core::bank::BankError;
use pdiff_core::difficulty::DifficultyError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error(transparent)]
    Bank(#[from] BankError),
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error(transparent)]
    Difficulty(#[from] DifficultyError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Usage(#[from] clap::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Usage(e) => e.exit_code(),
            CliError::Verification(_) => 3,
            CliError::Bank(BankError::Config(_)) => 2,
            CliError::Bank(BankError::BudgetExceeded { .. }) => 4,
            CliError::Aggregate(AggregateError::InvalidWeights(_)) => 2,
            CliError::Difficulty(DifficultyError::InvalidEpsilon(_))
            | CliError::Difficulty(DifficultyError::LengthBelowWord { .. }) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "pdiff",
    version,
    about = "Task difficulty from policy complexity"
)]
pub struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// Overrides the bank seed (build) or the Monte Carlo seed (others).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output file; standard output when absent.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct BankArg {
    /// Bank file written by `build`.
    #[arg(long)]
    pub bank: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProbArg {
    Uniform,
    Khat,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a task bank from a key = value config file.
    Build {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Extra `key=value` settings applied after the file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Print the effective configuration and exit.
        #[arg(long)]
        print_config: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run the property checks on a bank; exits 3 on any failure.
    Verify {
        #[command(flatten)]
        bank: BankArg,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Per-task difficulty records.
    Difficulty {
        #[command(flatten)]
        bank: BankArg,
        /// A kind name or `all`.
        #[arg(long, default_value = "all")]
        kind: String,
        /// Recompute instead of reading the cached records.
        #[arg(long)]
        recompute: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Agent response curve over min-length strata.
    Curve {
        #[command(flatten)]
        bank: BankArg,
        /// Agent program in hex.
        #[arg(long)]
        agent: String,
        #[arg(long, default_value_t = pdiff_core::aggregate::DEFAULT_CURVE_MAX_H)]
        max_h: f64,
        #[arg(long, value_enum, default_value_t = ProbArg::Uniform)]
        task_prob: ProbArg,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Weighted aggregate of binarized slices.
    Aggregate {
        #[command(flatten)]
        bank: BankArg,
        #[arg(long)]
        agent: String,
        /// `one`, `uniform:a:b`, `geometric:base` or `table:h=w,...`.
        #[arg(long, default_value = "one")]
        weights: String,
        #[arg(long, default_value = "min_length")]
        kind: String,
        #[arg(long, value_enum, default_value_t = ProbArg::Uniform)]
        task_prob: ProbArg,
        #[arg(long)]
        max_h: Option<f64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// C-test score over track tasks stratified by generator complexity.
    Ctest {
        #[command(flatten)]
        bank: BankArg,
        #[arg(long)]
        agent: String,
        #[arg(long, default_value_t = 0.0)]
        exponent: f64,
        /// Items per stratum; defaults to the smallest stratum.
        #[arg(long)]
        items_per_h: Option<usize>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Exact and approximate length distribution of the program code.
    Coding {
        #[arg(long = "c", default_value_t = 4)]
        word_bits: u8,
        #[arg(long, default_value_t = 64)]
        hmax: u32,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Pairs-based aggregate over all acceptable (task, policy) pairs.
    Pairs {
        #[command(flatten)]
        bank: BankArg,
        #[arg(long)]
        agent: String,
        #[arg(long, default_value = "one")]
        weights: String,
        #[command(flatten)]
        output: OutputArgs,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    let threads = cli.threads.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| commands::dispatch(&cli))
}

//! The `drrl` command-line interface.

mod commands;
pub mod verify;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::{cmd_evaluate, cmd_split, cmd_stats, cmd_train};
pub use verify::{cmd_verify, run_suite, Check, Suite};

#[derive(Debug, Parser)]
#[command(name = "drrl", version, about = "Train and certify robust recommendation losses")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split an interaction file into train/validation/test files.
    Split(SplitArgs),
    /// Train from a config file (with optional grid expansion).
    Train(TrainArgs),
    /// Full-ranking Recall@K / NDCG@K of a checkpoint.
    Evaluate(EvaluateArgs),
    /// Per-user worst-case weight and truncation diagnostics.
    Stats(StatsArgs),
    /// Run the numerical certification suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitKindArg {
    Iid,
    Temporal,
    Noise,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long, value_enum, default_value = "iid")]
    pub kind: SplitKindArg,
    /// Train+validation fraction (iid and noise splits).
    #[arg(long, default_value_t = 0.8)]
    pub train: f64,
    /// Validation fraction of the train part.
    #[arg(long, default_value_t = 0.1)]
    pub val: f64,
    /// Test fraction (temporal split).
    #[arg(long, default_value_t = 0.2)]
    pub test: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Apply k-core filtering before splitting.
    #[arg(long)]
    pub k_core: Option<usize>,
    pub input: PathBuf,
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `output.dir`.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackboneArg {
    Mf,
    Lightgcn,
    Xsimgcl,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Split directory written by `split` or `train`.
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long, value_enum, default_value = "mf")]
    pub backbone: BackboneArg,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetArg {
    Validation,
    Test,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_delimiter = ',', default_value = "20")]
    pub ks: Vec<usize>,
    #[arg(long, value_enum, default_value = "test")]
    pub target: TargetArg,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    Mse,
    Bce,
    Bpr,
    Sl,
    Ccl,
    Drrl,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum)]
    pub loss: LossArg,
    #[arg(long, default_value_t = 0.2)]
    pub tau: f64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// CCL margin, and the DrRL margin when the checkpoint has none.
    #[arg(long, default_value_t = 0.5)]
    pub margin: f64,
    #[arg(long, default_value_t = 2.0)]
    pub gamma_star: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    /// Re-solve each user's DrRL margin instead of using the stored one.
    #[arg(long)]
    pub solve_margin: bool,
    /// Per-user CSV destination; the summary always goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value = "all")]
    pub suite: Suite,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Instance size for the duality suite.
    #[arg(long, default_value_t = 6)]
    pub n: usize,
    #[arg(long, default_value_t = 2.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eta: f64,
    /// Random instances per check.
    #[arg(long, default_value_t = 20)]
    pub count: usize,
    /// Replaces every check's default tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Split(a) => cmd_split(&a).map(|_| 0),
        Command::Train(a) => cmd_train(&a).map(|_| 0),
        Command::Evaluate(a) => cmd_evaluate(&a).map(|_| 0),
        Command::Stats(a) => cmd_stats(&a).map(|_| 0),
        Command::Verify(a) => cmd_verify(&a),
    }
}

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ngfa::experiment::EvalMode;

#[derive(Debug, Parser)]
#[command(name = "ngfa", version, about = "Nonparametric Bayesian group factor analysis")]
pub struct Cli {
    /// Base random seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for parallel restarts (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with known loadings.
    Simulate(SimulateArgs),
    /// Fit the model with several random restarts.
    Fit(FitArgs),
    /// Score a fit against the true loadings of a simulated dataset.
    Eval(EvalArgs),
    /// Rank paired columns of two groups by shared-factor signal.
    Rank(RankArgs),
    /// Predict one group from others for new samples.
    Reconstruct(ReconstructArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// `sim1`, `sim2`, or a pattern JSON file.
    pub spec: String,
    /// Number of samples.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Columns per group: one value for all groups, or a comma list.
    #[arg(long, value_delimiter = ',', default_value = "100")]
    pub d: Vec<usize>,
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Dataset directory (may instead come from the config file).
    pub dataset: Option<PathBuf>,
    /// JSON run configuration; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub max_sweeps: Option<usize>,
    /// Relative training-MSE change that counts as converged.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Truncation level (default: min(N, largest group width)).
    #[arg(long)]
    pub k: Option<usize>,
    /// Output run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Mode {
    Sim1,
    Sim2,
}

impl From<Mode> for EvalMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Sim1 => EvalMode::Sim1,
            Mode::Sim2 => EvalMode::Sim2,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint file, restart directory, or run directory (uses best.json).
    pub checkpoint: PathBuf,
    /// Simulated dataset directory holding the truth files.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Sim1)]
    pub mode: Mode,
    /// Write the metrics JSON here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub group_a: String,
    #[arg(long)]
    pub group_b: String,
    /// One 0/1 label per column; adds an AUC to the summary.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Scores CSV (`rank,column,score`, best first).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    pub checkpoint: PathBuf,
    /// Observed group as `NAME=FILE.csv`; repeat for several groups.
    #[arg(long = "observed", value_name = "NAME=FILE")]
    pub observed: Vec<String>,
    /// Group to reconstruct.
    #[arg(long)]
    pub target: String,
    /// True values of the target group, for an MSE.
    #[arg(long)]
    pub target_truth: Option<PathBuf>,
    /// Reconstruction CSV.
    #[arg(long)]
    pub out: PathBuf,
}

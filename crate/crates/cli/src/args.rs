use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "mec-ibnb", version, about = "Exact and learned-pruning branch-and-bound for MEC offloading")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve training frames exactly and write labelled node samples.
    GenData(GenDataArgs),
    /// Train the pruning classifier on a dataset file.
    Train(TrainArgs),
    /// Solve a single frame and write its report and trace.
    Solve(SolveArgs),
    /// Compare exact and learned search on evaluation frames.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverKind {
    Bnb,
    Ibnb,
    Exhaustive,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Bnb => "bnb",
            SolverKind::Ibnb => "ibnb",
            SolverKind::Exhaustive => "exhaustive",
        }
    }
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Scenario config (`key = value` lines); built-in defaults if omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub frames: u64,
    /// Seed base; frame `i` uses seed `2 * (base + i)`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200_000)]
    pub max_nodes: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Seeds both the weight initialization and the batch shuffling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    /// Positive-class loss weight; negatives / positives when omitted.
    #[arg(long)]
    pub pos_weight: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SolverKind::Bnb)]
    pub solver: SolverKind,
    /// Frame seed; the config's `seed` when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Model file, required for `ibnb`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-7)]
    pub theta: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub delta_theta: f64,
    #[arg(long, default_value_t = 1e-30)]
    pub theta_min: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200_000)]
    pub max_nodes: usize,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: PathBuf,
    /// Initial thresholds, one series each; repeat the flag.
    #[arg(long = "theta", default_values_t = [1e-7, 1e-12])]
    pub thetas: Vec<f64>,
    #[arg(long, default_value_t = 1e-5)]
    pub delta_theta: f64,
    #[arg(long, default_value_t = 1e-30)]
    pub theta_min: f64,
    #[arg(long, default_value_t = 100)]
    pub frames: u64,
    /// Seed base; frame `i` uses seed `2 * (base + i) + 1`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Weight sweep as `lambda_t:lambda_e` pairs, comma separated.
    #[arg(long, default_value = "1:0,1:0.25,1:0.5,1:1,1:2,0.5:1,0.25:1")]
    pub weights: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200_000)]
    pub max_nodes: usize,
}

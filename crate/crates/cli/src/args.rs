use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hca_seqrec::corpus::{Pattern, DEFAULT_MAX_LEN};

use crate::checkpoint::ModelKind;

#[derive(Debug, Parser)]
#[command(name = "hca-seqrec", version, about = "Sequential recommendation with a hierarchical contextual attention GRU")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a corpus document from a `user<TAB>item<TAB>timestamp` event log.
    Ingest(IngestArgs),
    /// Generate a synthetic corpus plus its ground-truth file.
    Synth(SynthArgs),
    /// Train a model and write a checkpoint, run manifest and loss log.
    Train(TrainArgs),
    /// Rank items for every user and write the metrics report and TSV.
    Evaluate(EvaluateArgs),
    /// Train and evaluate over attention window widths.
    Sweep(SweepArgs),
    /// Print the attention weights at the last step of users' training sequences.
    InspectAttention(InspectArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Drop users with fewer events.
    #[arg(long, default_value_t = 30)]
    pub min_len: usize,
    /// Drop users with more events.
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    pub max_len: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    pub users: usize,
    #[arg(long, default_value_t = 100)]
    pub items: usize,
    /// Events per user.
    #[arg(long, default_value_t = 40)]
    pub len: usize,
    /// markov1, periodic or gift-noise.
    #[arg(long, default_value_t = Pattern::Markov1)]
    pub pattern: Pattern,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Probability of the dominant successor (markov1, gift-noise).
    #[arg(long, default_value_t = 0.9)]
    pub concentration: f64,
    /// Fixed motif length for the periodic pattern; drawn from 3..=5 when absent.
    #[arg(long)]
    pub period: Option<usize>,
    /// Probability that an event is a planted gift item (gift-noise).
    #[arg(long, default_value_t = 0.15)]
    pub noise: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Ground-truth file [default: --out with extension .truth.json].
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

/// Hyperparameters shared by `train` and `sweep`. `None` means "use the default".
#[derive(Debug, Clone, Args)]
pub struct OptimArgs {
    /// Embedding and hidden size [default: 20].
    #[arg(long)]
    pub dim: Option<usize>,
    /// Learning rate [default: 0.01].
    #[arg(long)]
    pub lr: Option<f64>,
    /// L2 regularisation coefficient [default: 0.001].
    #[arg(long)]
    pub l2: Option<f64>,
    /// Passes over all users [default: 20].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Parameters start uniform on [-r, r] [default: 0.5].
    #[arg(long)]
    pub init_range: Option<f64>,
    /// Divide each sequence's gradient by its number of triples.
    #[arg(long)]
    pub average_grads: bool,
    /// Rescale each update's gradient to at most this L2 norm.
    #[arg(long)]
    pub clip_norm: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = ModelKind::Hca)]
    pub model: ModelKind,
    /// Input attention window (hca only) [default: 2].
    #[arg(long)]
    pub wx: Option<usize>,
    /// Hidden-state attention window (hca only) [default: 3].
    #[arg(long)]
    pub wh: Option<usize>,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Checkpoint path; the manifest and loss log are written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalOptions {
    /// Cut-offs for Recall/MAP/NDCG.
    #[arg(long, value_delimiter = ',', default_value = "5,10,15,20")]
    pub topk: Vec<usize>,
    /// Keep each user's training items among the ranking candidates.
    #[arg(long)]
    pub rank_over_all: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// One or more checkpoints; each becomes one method in the report.
    #[arg(long, required = true)]
    pub ckpt: Vec<PathBuf>,
    #[command(flatten)]
    pub eval: EvalOptions,
    /// Report path [default: first checkpoint with extension .metrics.json].
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// TSV path [default: first checkpoint with extension .metrics.tsv].
    #[arg(long)]
    pub tsv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepMode {
    /// Vary w_x with w_h = 1.
    InputOnly,
    /// Vary w_h with w_x = 1.
    HiddenOnly,
    /// Every (w_x, w_h) pair.
    Grid,
    /// Both single-window sweeps, then fix each window at its best value and vary the other.
    FixedBest,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// `a..b` (inclusive), `a,b,c` or a single width.
    #[arg(long, default_value = "1..5")]
    pub wx_range: String,
    #[arg(long, default_value = "1..5")]
    pub wh_range: String,
    #[arg(long, value_enum, default_value_t = SweepMode::FixedBest)]
    pub mode: SweepMode,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub eval: EvalOptions,
    /// Write one TSV row per (phase, configuration, k).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InspectFormat {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// User id; every user when absent.
    #[arg(long)]
    pub user: Option<String>,
    /// Ground-truth file from `synth`; planted noise items are marked with `*`.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = InspectFormat::Text)]
    pub format: InspectFormat,
}

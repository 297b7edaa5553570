mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ishne::tensor::Activation;

use crate::error::CliError;

/// Influence self-attention embeddings for heterogeneous graphs.
#[derive(Debug, Parser)]
#[command(name = "ishne", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and write checkpoint, epoch log, splits and manifest.
    Train(TrainArgs),
    /// Report Micro-F1 and Macro-F1 of a checkpoint on one split.
    Eval(EvalArgs),
    /// Export fused embeddings and meta-path weights.
    Embed(EmbedArgs),
    /// Write a planted-community synthetic graph.
    Gensynth(GensynthArgs),
}

/// Model and optimizer settings. Unset flags fall back to the config file,
/// then to built-in defaults.
#[derive(Debug, Args, Clone, Default)]
pub struct HyperArgs {
    /// Hidden size per attention head.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Number of attention heads.
    #[arg(long)]
    pub heads: Option<usize>,
    /// Query/key/value size of the meta-path fusion step.
    #[arg(long)]
    pub fusion_dim: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Maximum number of epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Epochs without validation improvement before stopping.
    #[arg(long)]
    pub patience: Option<usize>,
    /// Dropout rate on attention coefficients.
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Activation on attention scores: leaky-relu, elu or tanh.
    #[arg(long)]
    pub activation_attn: Option<Activation>,
    /// Activation on aggregated neighbor vectors.
    #[arg(long)]
    pub activation_agg: Option<Activation>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Graph file.
    #[arg(long)]
    pub graph: PathBuf,
    /// Comma-separated meta-paths, e.g. P-A-P,P-S-P.
    #[arg(long, value_delimiter = ',', required = true)]
    pub metapaths: Vec<String>,
    /// Number of training nodes.
    #[arg(long)]
    pub train: usize,
    /// Number of validation nodes.
    #[arg(long)]
    pub val: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML file with defaults for the model and optimizer settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl SplitName {
    pub fn file_name(self) -> &'static str {
        match self {
            SplitName::Train => "train.ids",
            SplitName::Val => "val.ids",
            SplitName::Test => "test.ids",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        }
    }
}

/// Where a trained model comes from: a `train` output directory, or
/// explicit files.
#[derive(Debug, Args)]
pub struct ModelSource {
    #[arg(long)]
    pub graph: PathBuf,
    /// Output directory of a previous `train` run.
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// Checkpoint file; defaults to `<run>/model.ckpt`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Meta-paths; defaults to those recorded in `<run>/manifest.json`.
    #[arg(long, value_delimiter = ',')]
    pub metapaths: Option<Vec<String>>,
    /// Expected hidden size; a checkpoint with another size is rejected.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Expected head count.
    #[arg(long)]
    pub heads: Option<usize>,
    /// Expected fusion size.
    #[arg(long)]
    pub fusion_dim: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub source: ModelSource,
    /// Which split of the run to score.
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitName,
    /// Node-id file to score instead of a run split.
    #[arg(long)]
    pub ids: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub source: ModelSource,
    /// Embedding file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GensynthArgs {
    /// Graph file to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub targets: usize,
    /// Intermediate node counts for the two intermediate types.
    #[arg(long, value_delimiter = ',', default_values_t = [20, 20])]
    pub intermediates: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    #[arg(long, default_value_t = 8)]
    pub feature_dim: usize,
    /// Link probability between a target and a same-class intermediate.
    #[arg(long, default_value_t = 0.3)]
    pub p_in: f64,
    /// Link probability between a target and an other-class intermediate.
    #[arg(long, default_value_t = 0.05)]
    pub p_out: f64,
    /// Feature signal-to-noise ratio; noise std is 1/snr.
    #[arg(long, default_value_t = 2.0)]
    pub snr: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ISHNE_LOG", "warn")).init();
    let cli = Cli::parse();
    let result: Result<(), CliError> = match cli.command {
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Embed(a) => commands::embed(&a),
        Command::Gensynth(a) => commands::gensynth(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

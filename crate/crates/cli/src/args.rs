use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "fair", version, about = "Zero-shot scoring and self-training over precomputed vision-language embeddings")]
pub struct Cli {
    /// Worker threads. 1 runs everything on the calling thread; results do
    /// not depend on this value.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub workers: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic embedding dataset.
    Synth(SynthArgs),
    /// Check a dataset file against every format invariant.
    Validate(ValidateArgs),
    /// Write the initial anchors and an identity adapter as a checkpoint.
    Init(InitArgs),
    /// Compare the CLIP, CuPL, WCA and LAS zero-shot scorers.
    Zeroshot(ZeroshotArgs),
    /// Self-train anchors and adapter on unlabeled embeddings.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a labeled dataset.
    Eval(EvalArgs),
    /// Turn a training log into a plot-ready CSV.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// JSON synth spec; missing keys take defaults, unknown keys are errors.
    #[arg(long, conflicts_with = "reference")]
    pub spec: Option<PathBuf>,
    /// Generate the calibrated reference fixture.
    #[arg(long)]
    pub reference: bool,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Unit-normalize each description before averaging.
    #[arg(long)]
    pub prenormalize: bool,
}

#[derive(Debug, Args)]
pub struct ZeroshotArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output directory for zeroshot.json and zeroshot.csv.
    #[arg(long)]
    pub out: PathBuf,
    /// Anchors for the LAS column; defaults to the description means.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    pub n_use: usize,
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PbarArg {
    Batch,
    Ema,
}

/// Training overrides. Every flag left out falls back to the config file,
/// then to the built-in default.
#[derive(Debug, Default, Args)]
pub struct TrainFlags {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Epochs to run (default 15).
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub n_use: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub logit_scale: Option<f64>,
    #[arg(long)]
    pub no_pl_weight: bool,
    #[arg(long)]
    pub no_las: bool,
    #[arg(long)]
    pub fair_g: bool,
    #[arg(long)]
    pub topk_renorm: bool,
    #[arg(long, value_enum)]
    pub pbar: Option<PbarArg>,
    /// Momentum for `--pbar ema`.
    #[arg(long)]
    pub ema_momentum: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON run config: training fields plus optional `dataset`,
    /// `eval_dataset`, `resume` and `out` paths.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Labeled split to evaluate on; defaults to the training split.
    #[arg(long)]
    pub eval_dataset: Option<PathBuf>,
    /// Checkpoint to continue from; `--epochs` more epochs are run after it.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Output directory for checkpoint.fairckp, log.jsonl and config.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub flags: TrainFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output directory for metrics.json and confusion.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// JSON-lines log written by `train`.
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

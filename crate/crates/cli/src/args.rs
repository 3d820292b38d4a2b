//! Command-line interface definition.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

/// Batch toolkit for cross-modality segmentation pipelines: volume
/// preprocessing and slice export for external translation models,
/// tumor-signal augmentation, softmax ensembling, and evaluation.
#[derive(Debug, Parser)]
#[command(name = "modaprep", version, max_term_width = 100)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Resample, normalize, crop, and slice every manifest case;
    /// exports slice stacks and aligned label volumes.
    Preprocess(PreprocessArgs),
    /// Write darkened-tumor variants of labeled cases and the doubled
    /// manifest that references them.
    Augment(AugmentArgs),
    /// Rebuild volumes from (translated) slice directories.
    Stack(StackArgs),
    /// Average probability volumes from several fold models and write
    /// argmax label volumes.
    Ensemble(EnsembleArgs),
    /// Score predicted label volumes against ground truth (Dice, ASSD).
    Evaluate(EvaluateArgs),
    /// Fréchet distance between two feature files.
    Fid(FidArgs),
    /// Deterministic k-fold split of the manifest cases.
    Split(SplitArgs),
}

#[derive(Debug, clap::Args)]
pub struct PreprocessArgs {
    /// Dataset manifest (JSON).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Run configuration (JSON); defaults are used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; one subdirectory per case.
    #[arg(long, env = "MODAPREP_OUT")]
    pub out: PathBuf,
    /// Worker count for case-level parallelism.
    #[arg(long, env = "MODAPREP_JOBS")]
    pub jobs: Option<usize>,
    /// Export slices as 16-bit PNG instead of raw float32.
    #[arg(long)]
    pub png: bool,
}

#[derive(Debug, clap::Args)]
pub struct AugmentArgs {
    /// Dataset manifest (JSON).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Where to write the expanded manifest
    /// (default: `<manifest>_at.json` next to the input).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Intensity multiplier for the target label, in (0, 1].
    #[arg(long)]
    pub factor: Option<f32>,
    /// Label whose voxels are scaled.
    #[arg(long)]
    pub label: Option<u8>,
    /// Rescale each volume to [0, 1] before applying the reduction
    /// (for manifests that point at raw rather than preprocessed data).
    #[arg(long)]
    pub normalize_first: bool,
    /// Worker count for case-level parallelism.
    #[arg(long, env = "MODAPREP_JOBS")]
    pub jobs: Option<usize>,
}

#[derive(Debug, clap::Args)]
pub struct StackArgs {
    /// A case directory (containing `case.json`) or a directory of
    /// case directories.
    pub slices: PathBuf,
    /// Output directory for the rebuilt volumes.
    #[arg(long, env = "MODAPREP_OUT")]
    pub out: PathBuf,
    /// Worker count for case-level parallelism.
    #[arg(long, env = "MODAPREP_JOBS")]
    pub jobs: Option<usize>,
}

#[derive(Debug, clap::Args)]
pub struct EnsembleArgs {
    /// Member directories, one per fold model, each holding per-case
    /// probability sidecars.
    #[arg(required = true, num_args = 1..)]
    pub members: Vec<PathBuf>,
    /// Output directory for the ensembled label volumes.
    #[arg(long, env = "MODAPREP_OUT")]
    pub out: PathBuf,
    /// Worker count for case-level parallelism.
    #[arg(long, env = "MODAPREP_JOBS")]
    pub jobs: Option<usize>,
}

#[derive(Debug, clap::Args)]
pub struct EvaluateArgs {
    /// Directory of predicted label volumes.
    #[arg(long)]
    pub pred: PathBuf,
    /// Directory of ground-truth label volumes.
    #[arg(long)]
    pub gt: PathBuf,
    /// Where to write the JSON report (default: `evaluation.json`
    /// inside the prediction directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Experiment name shown in the rendered table.
    #[arg(long, default_value = "experiment")]
    pub name: String,
    /// Worker count for case-level parallelism.
    #[arg(long, env = "MODAPREP_JOBS")]
    pub jobs: Option<usize>,
}

#[derive(Debug, clap::Args)]
pub struct FidArgs {
    /// First feature file (.csv, or raw float32 with a .json sidecar).
    pub features_a: PathBuf,
    /// Second feature file.
    pub features_b: PathBuf,
    /// Optional path for the JSON result.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct SplitArgs {
    /// Dataset manifest (JSON).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Fold count.
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Shuffle seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Optional path for the fold-assignment JSON (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

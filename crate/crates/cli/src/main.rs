//! `hybridcnn`: dataset preparation, training, evaluation, inspection and PCA
//! export for the hybrid kidney-CT classifier.
//!
//! Exit codes: 0 success, 1 validation or configuration error, 2 runtime
//! failure. Errors are printed as a single `error:` line on stderr.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use hybridcnn::eval::{FeatureTap, SignConvention};
use hybridcnn::Error;

#[derive(Debug, Parser)]
#[command(name = "hybridcnn", version, about = "Hybrid CNN kidney CT classifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case", tag = "command", content = "args")]
enum Command {
    /// Build train/test/validation manifests, optionally augmenting the training split.
    Prepare(PrepareArgs),
    /// Print a model graph's layer table and parameter totals.
    Inspect(InspectArgs),
    /// Train both branches, then the hybrid with the branches frozen.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a manifest.
    Eval(EvalArgs),
    /// Classify one image.
    Predict(PredictArgs),
    /// Project features onto two principal components.
    Pca(PcaArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum AugmentPreset {
    /// No augmentation.
    None,
    /// Per-class targets 5,141 / 3,918 / 11,127 / 6,849 from the reference class sizes.
    Balanced,
}

#[derive(Debug, Args, Serialize)]
struct PrepareArgs {
    /// Generate the synthetic four-pattern dataset instead of reading images.
    #[arg(long, conflicts_with_all = ["data_dir", "manifest"])]
    synthetic: bool,
    /// Images per class for --synthetic.
    #[arg(long, default_value_t = 200)]
    per_class: usize,
    /// Side length of --synthetic images.
    #[arg(long, default_value_t = 64)]
    size: usize,
    /// Class-per-subdirectory image tree (Normal/, Stone/, Cyst/, Tumor/).
    #[arg(long, conflicts_with = "manifest")]
    data_dir: Option<PathBuf>,
    /// Existing JSONL manifest of original images.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Augmentation plan JSON file; overrides --augment.
    #[arg(long)]
    augment_plan: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = AugmentPreset::None)]
    augment: AugmentPreset,
    #[arg(long, default_value_t = 0.70)]
    train_frac: f64,
    /// Share of the held-out part used for validation.
    #[arg(long, default_value_t = 0.20)]
    val_frac: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Debug, Args, Serialize)]
struct InspectArgs {
    /// Model-graph JSON; defaults to the full-size custom network at 224x224x3.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Fail unless the trainable parameter total equals this value.
    #[arg(long)]
    expect_trainable: Option<usize>,
    /// Print the summary as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    /// Training manifest (JSONL).
    #[arg(long)]
    manifest: PathBuf,
    /// Validation manifest; accuracy on it is logged per epoch.
    #[arg(long)]
    validation: Option<PathBuf>,
    /// Hybrid model-graph JSON; defaults to the desk-scale 64x64 hybrid.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Hybrid epochs.
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    /// Branch epochs; defaults to --epochs.
    #[arg(long)]
    branch_epochs: Option<usize>,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    /// Fusion similarity threshold in [-1, 1].
    #[arg(long)]
    tau: Option<f64>,
    /// Keep updating branch weights during hybrid training.
    #[arg(long)]
    fine_tune_branches: bool,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Debug, Args, Serialize)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    /// Skip the branches and the fusion junction.
    #[arg(long)]
    custom_only: bool,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Debug, Args, Serialize)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// PNG or JPEG image.
    image: PathBuf,
    #[arg(long)]
    custom_only: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum TapArg {
    PenultimateDense,
    FusionPoint,
}

impl From<TapArg> for FeatureTap {
    fn from(t: TapArg) -> Self {
        match t {
            TapArg::PenultimateDense => FeatureTap::PenultimateDense,
            TapArg::FusionPoint => FeatureTap::FusionPoint,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum SignArg {
    None,
    MaxAbsPositive,
}

impl From<SignArg> for SignConvention {
    fn from(s: SignArg) -> Self {
        match s {
            SignArg::None => SignConvention::None,
            SignArg::MaxAbsPositive => SignConvention::MaxAbsPositive,
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct PcaArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = TapArg::PenultimateDense)]
    tap: TapArg,
    #[arg(long, value_enum, default_value_t = SignArg::MaxAbsPositive)]
    sign: SignArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

fn run(cli: &Cli) -> hybridcnn::Result<()> {
    match &cli.command {
        Command::Prepare(a) => commands::prepare(a, &cli.command),
        Command::Inspect(a) => commands::inspect(a),
        Command::Train(a) => commands::train(a, &cli.command),
        Command::Eval(a) => commands::eval(a, &cli.command),
        Command::Predict(a) => commands::predict(a),
        Command::Pca(a) => commands::pca(a, &cli.command),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HCNN_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            // clap's rendering already starts with `error:`
            eprint!("{}", e.render());
            return ExitCode::from(1);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_validation() {
        1
    } else {
        2
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod error;
mod files;

use error::{CliError, CliResult};

/// Facade and billboard coverage analysis for streetscape images.
#[derive(Debug, Parser)]
#[command(name = "streetscape", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Seed for randomized commands (required by `split` and `augment`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, short, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a dataset manifest into train/val/test buckets.
    Split(SplitArgs),
    /// Compare predicted masks with ground truth and report IoU.
    Evaluate(EvaluateArgs),
    /// Report primary/secondary contour coverage per image.
    Analyze(AnalyzeArgs),
    /// Write augmented copies of every manifest entry.
    Augment(AugmentArgs),
    /// Predict composite contour masks with ONNX models.
    Infer(InferArgs),
    /// Render contour overlays from images and masks.
    Overlay(OverlayArgs),
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// train:val:test proportions.
    #[arg(long, default_value = "0.68:0.12:0.2")]
    pub ratios: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IouMode {
    /// Sum confusion counts over the dataset, then divide.
    Micro,
    /// Average per-image IoU values.
    Macro,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory of predicted mask PNGs.
    #[arg(long)]
    pub pred: PathBuf,
    /// Directory of ground-truth mask PNGs or polygon JSON files.
    #[arg(long)]
    pub truth: PathBuf,
    /// Label space of the masks, comma separated.
    #[arg(long, default_value = "0,2", value_delimiter = ',')]
    pub classes: Vec<u8>,
    /// Classes averaged into the mean IoU (defaults to --classes).
    #[arg(long, value_delimiter = ',')]
    pub eval: Option<Vec<u8>>,
    /// Average over the billboard class only.
    #[arg(long, conflicts_with = "eval")]
    pub billboard_only: bool,
    /// Collapse every class except billboards and ignore into `other`.
    #[arg(long)]
    pub binary: bool,
    #[arg(long, value_enum, default_value_t = IouMode::Micro)]
    pub mode: IouMode,
    /// Label table for polygon ground truth (JSON).
    #[arg(long)]
    pub label_table: Option<PathBuf>,
    /// Metrics JSON destination (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-image IoU CSV destination in macro mode.
    #[arg(long)]
    pub per_image_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Denominator {
    Whole,
    NonSkyRoad,
}

#[derive(Debug, Args)]
pub struct ModelOpts {
    /// Model config JSON for the facade (primary contour) model.
    #[arg(long)]
    pub primary_model: Option<PathBuf>,
    /// Model config JSON for the billboard (secondary contour) model.
    #[arg(long)]
    pub secondary_model: Option<PathBuf>,
    /// Billboard probability threshold.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f32,
    /// Class map JSON from the primary model's labels to canonical classes
    /// (defaults to Cityscapes trainIds).
    #[arg(long)]
    pub class_map: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Directory of canonical mask PNGs.
    #[arg(long, conflicts_with_all = ["primary_model", "secondary_model"])]
    pub masks: Option<PathBuf>,
    /// Directory of images (inferred with the models, or used for overlays).
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[command(flatten)]
    pub models: ModelOpts,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write overlay PNGs (needs --images).
    #[arg(long)]
    pub overlay: bool,
    #[arg(long, value_enum, default_value_t = Denominator::Whole)]
    pub denominator: Denominator,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Augmentation spec JSON.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Print progress every N images.
    #[arg(long, default_value_t = 100)]
    pub progress_every: usize,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub images: PathBuf,
    #[command(flatten)]
    pub models: ModelOpts,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OverlayArgs {
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub masks: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
}

fn run(cli: Cli) -> CliResult<()> {
    let jobs = cli.global.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if jobs == 0 {
        return Err(CliError::usage("--jobs must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::env(format!("cannot start worker pool: {e}")))?;
    let seed = cli.global.seed;
    pool.install(|| match cli.command {
        Command::Split(args) => commands::split::run(&args, seed),
        Command::Evaluate(args) => commands::evaluate::run(&args),
        Command::Analyze(args) => commands::analyze::run(&args, jobs),
        Command::Augment(args) => commands::augment::run(&args, seed),
        Command::Infer(args) => commands::infer::run(&args, jobs),
        Command::Overlay(args) => commands::overlay::run(&args),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.global.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

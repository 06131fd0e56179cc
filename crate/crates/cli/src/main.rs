//! `ssrn`: train, predict, evaluate and benchmark saliency regression models.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ssrn_core::data::InputMode;
use ssrn_core::loss::LossKind;

#[derive(Debug, Parser)]
#[command(name = "ssrn", version, about = "Saliency score regression network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model on a manifest of image/mask pairs.
    Train(TrainArgs),
    /// Write an 8-bit PGM saliency map for every input image.
    Predict(PredictArgs),
    /// Score stored predictions against ground-truth masks.
    Eval(EvalArgs),
    /// Time read-to-result inference, one image at a time.
    Bench(BenchArgs),
    /// Generate a synthetic rectangle dataset with a manifest.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Tab-separated manifest of `<image>\t<mask>` lines.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Separate validation manifest. Without it the training manifest is split.
    #[arg(long)]
    pub val_manifest: Option<PathBuf>,
    /// Share of the manifest kept for training when splitting.
    #[arg(long, default_value_t = 0.8)]
    pub train_ratio: f64,
    #[arg(long, default_value = "vgg16")]
    pub preset: String,
    #[arg(long, default_value = "weighted-smooth-l1")]
    pub loss: LossKind,
    /// Weight of the salient-region term.
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// `full-resolution` or `uniform-<side>` (e.g. `uniform-224`).
    #[arg(long, default_value = "full-resolution")]
    pub input_mode: InputMode,
    #[arg(long, env = "SSRN_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub base_lr: Option<f64>,
    #[arg(long)]
    pub step_size: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub val_period: Option<usize>,
    /// Skip horizontal-flip augmentation.
    #[arg(long)]
    pub no_augment: bool,
    /// Where to write the final weights.
    #[arg(long)]
    pub out: PathBuf,
    /// Loss trace CSV (default: `<out>.trace.csv`).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Also write the lowest-validation-loss weights here.
    #[arg(long)]
    pub best_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Manifest whose image column lists the inputs.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Image files (PPM or PGM).
    pub images: Vec<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value = "full-resolution")]
    pub input_mode: InputMode,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of `<image stem>.pgm` predictions.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Manifest providing the ground-truth masks.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Metrics report JSON (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for the mean and per-image PR/ROC curve CSVs.
    #[arg(long)]
    pub curves_dir: Option<PathBuf>,
    /// Score the images that have predictions instead of failing.
    #[arg(long)]
    pub allow_missing: bool,
    /// Mean per-image runtime to record in the report, in seconds.
    #[arg(long)]
    pub runtime: Option<f64>,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    #[arg(long, default_value = "full-resolution")]
    pub input_mode: InputMode,
    /// Runtime report JSON (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub count: usize,
    #[arg(long, default_value = "synth")]
    pub prefix: String,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, env = "SSRN_SEED", default_value_t = 0)]
    pub seed: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_target(false)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                commands::EXIT_USAGE
            } else {
                0
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Train(a) => commands::train(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Bench(a) => commands::bench(&a),
        Command::Synth(a) => commands::synth(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

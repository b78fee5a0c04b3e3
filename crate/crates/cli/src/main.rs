//! `anchorlab` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error. Diagnostics go to
//! stderr; results go to stdout or files under `--output-dir`.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use anchorlab::ImageDims;

#[derive(Debug, Parser)]
#[command(name = "anchorlab", version, about = "KITTI anchor, geometry and evaluation toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "ANCHORLAB_THREADS")]
    pub threads: Option<usize>,

    /// Directory for result files.
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse every label file in a directory and report errors and counts.
    Validate(ValidateArgs),
    /// Select anchor shapes from labelled boxes with K-Means.
    Anchors(AnchorsArgs),
    /// Per-layer dimensions, strides and activation memory of a builtin network.
    Netinfo(NetinfoArgs),
    /// KITTI-style average precision of a result directory.
    Eval(EvalArgs),
    /// Write synthetic result files by perturbing ground truth.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub dir: PathBuf,

    /// Expect result rows (16 fields, trailing score).
    #[arg(long)]
    pub results: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DifficultyFilter {
    All,
    Easy,
    Moderate,
    Hard,
}

#[derive(Debug, Args)]
pub struct AnchorsArgs {
    #[arg(long)]
    pub labels: PathBuf,

    #[arg(long, default_value = "Car")]
    pub class: String,

    #[arg(long, default_value_t = 9)]
    pub k: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long = "max-iter", default_value_t = 300)]
    pub max_iter: usize,

    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,

    /// Cluster only boxes in this difficulty bin or easier.
    #[arg(long, value_enum, default_value_t = DifficultyFilter::All)]
    pub difficulty: DifficultyFilter,

    /// Multiply observed widths and heights (e.g. the network resize factor).
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
}

#[derive(Debug, Args)]
pub struct NetinfoArgs {
    #[arg(long, value_parser = ["vgg16", "alexnet"])]
    pub net: String,

    /// Input size WIDTHxHEIGHT (default: 224x224, 227x227 for alexnet).
    #[arg(long)]
    pub input: Option<ImageDims>,

    /// Stop the table and memory estimate at this layer.
    #[arg(long)]
    pub layer: Option<String>,

    #[arg(long = "bytes-per-elem", default_value_t = 4)]
    pub bytes_per_elem: u64,

    #[arg(long = "train-multiplier", default_value_t = 2.0)]
    pub train_multiplier: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Interp {
    R11,
    R40,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub gt: PathBuf,

    #[arg(long)]
    pub det: PathBuf,

    #[arg(long, default_value = "Car")]
    pub class: String,

    #[arg(long, default_value_t = 0.7)]
    pub iou: f64,

    #[arg(long, value_enum, default_value_t = Interp::R11)]
    pub interp: Interp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScoreModelArg {
    IouBased,
    Random,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub gt: PathBuf,

    /// Destination for result files (default: --output-dir).
    #[arg(long)]
    pub out: Option<PathBuf>,

    #[arg(long = "center-sigma", default_value_t = 0.0)]
    pub center_sigma: f64,

    #[arg(long = "scale-sigma", default_value_t = 0.0)]
    pub scale_sigma: f64,

    #[arg(long = "drop-rate", default_value_t = 0.0)]
    pub drop_rate: f64,

    /// Expected spurious boxes per image.
    #[arg(long = "fp-rate", default_value_t = 0.0)]
    pub fp_rate: f64,

    #[arg(long = "score-model", value_enum, default_value_t = ScoreModelArg::IouBased)]
    pub score_model: ScoreModelArg,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, default_value_t = ImageDims::KITTI)]
    pub image: ImageDims,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anchorlab::Error> for CliError {
    fn from(e: anchorlab::Error) -> Self {
        CliError::Data(e.into())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.into())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    if let Some(n) = cli.global.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }

    match commands::run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

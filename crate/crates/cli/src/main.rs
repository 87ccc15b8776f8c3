mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use tmaccel::compress::CodecError;
use tmaccel::emu::EmuError;
use tmaccel::formats::FormatError;
use tmaccel::model::ModelError;
use tmaccel::protocol::ProtocolError;
use tmaccel::recal::RecalError;
use tmaccel::system::SystemError;
use tmaccel::trainer::TrainError;

/// Sparse Tsetlin Machine toolchain and accelerator emulator.
#[derive(Debug, Parser)]
#[command(name = "tmaccel", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Thermometer-encode a numeric CSV into a 0/1 dataset.
    Booleanize(BooleanizeArgs),
    /// Train a model on a labeled 0/1 dataset.
    Train(TrainArgs),
    /// Compress a model into Include instructions.
    Compress(CompressArgs),
    /// Rebuild a dense model from an instruction file.
    Decompress(DecompressArgs),
    /// Classify a dataset with the dense reference model.
    InferDense(InferDenseArgs),
    /// Batch and serialize a dataset into a feature stream file.
    PackFeatures(PackFeaturesArgs),
    /// Run an instruction file and feature data on the emulated accelerator.
    Emulate(EmulateArgs),
    /// Repeat emulated runs and write one CSV row per repetition.
    Bench(BenchArgs),
    /// Streaming inference under drift with automatic retuning.
    RecalDemo(RecalArgs),
}

#[derive(Debug, Args)]
pub struct BooleanizeArgs {
    /// Comma-separated numeric rows.
    #[arg(long)]
    pub input: PathBuf,
    /// Thresholds per column, evenly spaced between the column min and max.
    #[arg(long, default_value_t = 4)]
    pub levels: usize,
    /// Treat the last column as an integer class label.
    #[arg(long)]
    pub labeled: bool,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Number of classes; defaults to the largest label + 1.
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub clauses: usize,
    #[arg(long, default_value_t = 3.9)]
    pub specificity: f64,
    #[arg(long, default_value_t = 10)]
    pub threshold: u32,
    #[arg(long, default_value_t = 128)]
    pub states: u16,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Model file; a `.json` extension writes the JSON form.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompressArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecompressArgs {
    #[arg(long)]
    pub instructions: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct InferDenseArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Classification file, one class per line; stdout if omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PackFeaturesArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Bus width in bits: 16, 32 or 64.
    #[arg(long, default_value_t = 32)]
    pub width: u32,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub instructions: PathBuf,
    /// Feature stream file; every lane of every batch is classified.
    #[arg(long, conflicts_with = "datapoints", required_unless_present = "datapoints")]
    pub features: Option<PathBuf>,
    /// 0/1 dataset; labels, if present, are ignored.
    #[arg(long)]
    pub datapoints: Option<PathBuf>,
    /// Key-value run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Core count, overriding the configuration.
    #[arg(long)]
    pub cores: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EmulateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Cross-check every classification against the dense model.
    #[arg(long)]
    pub verify: bool,
    /// Classification file, one class per line; stdout if omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Run report CSV.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 1)]
    pub repetitions: usize,
    /// Report CSV; stdout if omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RecalArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    #[arg(long, default_value_t = 50)]
    pub shift_step: usize,
    /// Keep the distribution fixed.
    #[arg(long)]
    pub no_shift: bool,
    /// Mean shift applied on every axis.
    #[arg(long, default_value_t = 2.5)]
    pub shift: f64,
    /// Retune when probe accuracy falls below this.
    #[arg(long, default_value_t = 0.8)]
    pub threshold: f64,
    /// Probability of a flipped label.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 64)]
    pub window: usize,
    #[arg(long, default_value_t = 1)]
    pub cores: usize,
    /// Timeline CSV; stdout if omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("verification failed: {0}")]
    Verify(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Hardware(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Verify(_) => 1,
            Self::Input(_) => 2,
            Self::Hardware(_) => 3,
        }
    }
}

macro_rules! map_error {
    ($($t:ty => $variant:ident),* $(,)?) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Self::$variant(e.to_string())
            }
        })*
    };
}

map_error! {
    std::io::Error => Input,
    FormatError => Input,
    ModelError => Input,
    TrainError => Input,
    CodecError => Hardware,
    ProtocolError => Hardware,
    EmuError => Hardware,
    SystemError => Hardware,
}

impl From<RecalError> for CliError {
    fn from(e: RecalError) -> Self {
        match e {
            RecalError::Scenario(_) | RecalError::Model(_) | RecalError::Train(_) => {
                Self::Input(e.to_string())
            }
            RecalError::Codec(_) | RecalError::System(_) => Self::Hardware(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Booleanize(a) => commands::booleanize(&a),
        Command::Train(a) => commands::train(&a),
        Command::Compress(a) => commands::compress(&a),
        Command::Decompress(a) => commands::decompress(&a),
        Command::InferDense(a) => commands::infer_dense(&a),
        Command::PackFeatures(a) => commands::pack_features(&a),
        Command::Emulate(a) => commands::emulate(&a),
        Command::Bench(a) => commands::bench(&a),
        Command::RecalDemo(a) => commands::recal_demo(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

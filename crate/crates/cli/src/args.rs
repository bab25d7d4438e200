//! Command-line flags. Every args struct serializes into the run manifest
//! with all defaults filled in.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use entcap_core::encoding::CnotPlacement;
use entcap_core::model::Pooling;

#[derive(Debug, Parser)]
#[command(name = "entcap", version, about = "Entangling capability of parameterized quantum circuits")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate random circuits (unlabeled)
    Generate(GenerateArgs),
    /// Label circuits with sampled Meyer-Wallach entangling capability
    Label(LabelArgs),
    /// Train the LSTM predictor on a labeled dataset
    Train(TrainArgs),
    /// Evaluate a trained model on a labeled dataset
    Eval(EvalArgs),
    /// Predict entangling capability for circuits
    Predict(PredictArgs),
    /// Tabulate estimate spread against sample count
    Convergence(ConvergenceArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate(_) => "generate",
            Command::Label(_) => "label",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Predict(_) => "predict",
            Command::Convergence(_) => "convergence",
        }
    }
}

fn parse_min(s: &str, min: usize) -> Result<usize, String> {
    let v: usize = s.parse().map_err(|e| format!("{e}"))?;
    if v < min {
        return Err(format!("must be at least {min}"));
    }
    Ok(v)
}

fn at_least_1(s: &str) -> Result<usize, String> {
    parse_min(s, 1)
}

fn at_least_2(s: &str) -> Result<usize, String> {
    parse_min(s, 2)
}

fn fraction(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if !(v > 0.0 && v < 1.0) {
        return Err("must lie strictly between 0 and 1".into());
    }
    Ok(v)
}

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if !(v > 0.0 && v.is_finite()) {
        return Err("must be a positive number".into());
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyArg {
    Mixed,
    Gate,
    Layer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolingArg {
    Concat,
    Mean,
    Last,
}

impl From<PoolingArg> for Pooling {
    fn from(p: PoolingArg) -> Self {
        match p {
            PoolingArg::Concat => Pooling::Concat,
            PoolingArg::Mean => Pooling::Mean,
            PoolingArg::Last => Pooling::Last,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlacementArg {
    Diagonal,
    OffDiagonal,
}

impl From<PlacementArg> for CnotPlacement {
    fn from(p: PlacementArg) -> Self {
        match p {
            PlacementArg::Diagonal => CnotPlacement::Diagonal,
            PlacementArg::OffDiagonal => CnotPlacement::OffDiagonal,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenerateArgs {
    /// Number of circuits
    #[arg(long, default_value_t = 20_000, value_parser = at_least_1)]
    pub count: usize,
    /// Qubits per circuit
    #[arg(long, default_value_t = 6, value_parser = at_least_2)]
    pub qubits: usize,
    /// Gates per circuit
    #[arg(long, default_value_t = 30, value_parser = at_least_1)]
    pub gates: usize,
    #[arg(long, value_enum, default_value_t = StrategyArg::Mixed)]
    pub strategy: StrategyArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LabelArgs {
    /// Circuits file (labels, if present, are replaced)
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// Parameter samples per circuit
    #[arg(long, default_value_t = 1000, value_parser = at_least_1)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Label records on all available cores
    #[arg(long)]
    pub parallel: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    /// Labeled dataset
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    /// Fraction of records used for training; the rest is the test set
    #[arg(long, default_value_t = 0.9, value_parser = fraction)]
    pub split: f64,
    /// Optional fraction of the training portion held out for checkpoint
    /// selection; without it the test set selects the checkpoint
    #[arg(long, value_parser = fraction)]
    pub val: Option<f64>,
    #[arg(long, default_value_t = 200, value_parser = at_least_1)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1000, value_parser = at_least_1)]
    pub batch: usize,
    #[arg(long, default_value_t = 64, value_parser = at_least_1)]
    pub hidden: usize,
    #[arg(long, default_value_t = 64, value_parser = at_least_1)]
    pub fc: usize,
    #[arg(long, default_value_t = 1e-3, value_parser = positive)]
    pub lr: f64,
    /// Huber threshold
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub delta: f64,
    #[arg(long, value_enum, default_value_t = PoolingArg::Concat)]
    pub pooling: PoolingArg,
    #[arg(long, value_enum, default_value_t = PlacementArg::Diagonal)]
    pub placement: PlacementArg,
    /// Divisor applied to gate codes before they reach the model
    #[arg(long, default_value_t = 40.0, value_parser = positive)]
    pub scale: f64,
    /// Encoded sequence length (circuits are zero-padded to it)
    #[arg(long, default_value_t = 30, value_parser = at_least_1)]
    pub max_steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Checkpoint path
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Per-epoch log (tab-separated)
    #[arg(long, value_name = "FILE")]
    pub log: PathBuf,
    /// Also write the held-out test records to this dataset file
    #[arg(long, value_name = "FILE")]
    pub test_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Labeled dataset
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    /// Metrics report (JSON)
    #[arg(long, value_name = "FILE")]
    pub report: PathBuf,
    /// Scatter file; defaults to `<report>.scatter.tsv`
    #[arg(long, value_name = "FILE")]
    pub scatter: Option<PathBuf>,
    /// Subsample repetitions (0 disables)
    #[arg(long, default_value_t = 200)]
    pub subsample_groups: usize,
    #[arg(long, default_value_t = 20, value_parser = at_least_2)]
    pub group_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Circuits file, labeled or not
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// Predictions (tab-separated)
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ConvergenceArgs {
    #[arg(long, value_delimiter = ',', default_value = "4,6,8,10", value_parser = at_least_2)]
    pub qubits: Vec<usize>,
    #[arg(long, default_value_t = 30, value_parser = at_least_1)]
    pub gates: usize,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "10,20,50,100,200,500,1000",
        value_parser = at_least_1
    )]
    pub sample_counts: Vec<usize>,
    #[arg(long, default_value_t = 20, value_parser = at_least_2)]
    pub repetitions: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

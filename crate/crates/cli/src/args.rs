use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use roadcast::graph::HopMode;
use roadcast::train::OptimizerKind;

#[derive(Debug, Parser)]
#[command(
    name = "roadcast",
    version,
    about = "Graph-convolutional seq2seq road speed forecasting"
)]
pub struct Cli {
    /// Log progress (per-epoch losses and so on) to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic speed file, its parameter sidecar and the graph files.
    Generate(GenerateArgs),
    /// Historical slot statistics of the training days.
    Stats(StatsArgs),
    /// Fit a model and write its checkpoint, history and test metrics.
    Train(TrainArgs),
    /// Forecast every test anchor with a checkpoint.
    Predict(PredictArgs),
    /// Compare the model and baselines on the test days.
    Evaluate(EvaluateArgs),
    /// Export attention matrices for test samples.
    Attention(AttentionArgs),
    /// Train one model per hop order and report test error per horizon.
    KhopSweep(SweepArgs),
}

#[derive(Debug, Clone, Args)]
pub struct GraphArgs {
    /// Use a directed ring of N links (L0 -> L1 -> ... -> L0).
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(1..), conflicts_with_all = ["links", "edges"])]
    pub ring: Option<u64>,

    /// Link file (header `link_id`).
    #[arg(long, value_name = "PATH", requires = "edges")]
    pub links: Option<PathBuf>,

    /// Edge file (header `from_link,to_link`).
    #[arg(long, value_name = "PATH", requires = "links")]
    pub edges: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    #[command(flatten)]
    pub graph: GraphArgs,

    /// Speed file (header `timestamp,link_id,speed_kmh`).
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,

    /// Leading days used for training; the rest are test days.
    #[arg(long, value_name = "DAYS")]
    pub train_days: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct HorizonArgs {
    /// Forecast horizon in 5-minute steps.
    #[arg(long, value_name = "STEPS", conflicts_with = "horizon_min")]
    pub n: Option<usize>,

    /// Forecast horizon in minutes (5, 15, 30, ...), converted to steps.
    #[arg(long, value_name = "MINUTES")]
    pub horizon_min: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    pub out: OutArgs,

    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub days: u64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, value_name = "DATE")]
    pub start_date: Option<NaiveDate>,

    /// Gaussian noise standard deviation, km/h.
    #[arg(long, value_name = "KMH")]
    pub noise: Option<f64>,

    /// Slots of delay per hop away from the bottleneck link.
    #[arg(long, value_name = "SLOTS")]
    pub wave_lag: Option<u32>,

    /// Index of the link where congestion starts.
    #[arg(long, value_name = "INDEX")]
    pub bottleneck: Option<usize>,

    /// Per-day standard deviation of the peak times, minutes.
    #[arg(long, value_name = "MINUTES")]
    pub peak_jitter: Option<f64>,

    /// Per-day relative standard deviation of the dip depth.
    #[arg(long, value_name = "FRACTION")]
    pub depth_jitter: Option<f64>,

    /// Expected number of sharp incident drops per link and day.
    #[arg(long, value_name = "RATE")]
    pub incidents: Option<f64>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

/// Hyperparameters; unset flags fall back to `--from-run` or the defaults.
#[derive(Debug, Clone, Args)]
pub struct HyperArgs {
    #[arg(long)]
    pub optimizer: Option<OptimizerKind>,

    #[arg(long, value_name = "RATE")]
    pub lr: Option<f64>,

    #[arg(long)]
    pub batch_size: Option<usize>,

    #[arg(long)]
    pub epochs: Option<usize>,

    #[arg(long)]
    pub patience: Option<usize>,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Hidden size H.
    #[arg(long)]
    pub hidden: Option<usize>,

    /// Hop order K of the graph convolution.
    #[arg(long)]
    pub k: Option<usize>,

    #[arg(long)]
    pub hop_mode: Option<HopMode>,

    /// Look-back m; the encoder sees m + 1 steps.
    #[arg(long)]
    pub m: Option<usize>,

    #[command(flatten)]
    pub horizon: HorizonArgs,

    /// Global gradient-norm clip.
    #[arg(long, value_name = "NORM", conflicts_with = "no_clip")]
    pub clip_norm: Option<f64>,

    #[arg(long)]
    pub no_clip: bool,

    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[command(flatten)]
    pub out: OutArgs,

    /// Start from the configuration recorded in a run.json.
    #[arg(long, value_name = "PATH")]
    pub from_run: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub out: OutArgs,

    #[arg(long, value_name = "PATH")]
    pub checkpoint: PathBuf,

    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub out: OutArgs,

    /// Needed only when `model` is among the predictors.
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,

    /// Comma-separated subset of model,ha,naive,rolling,direct.
    #[arg(long, value_name = "LIST")]
    pub predictors: Option<String>,

    /// Look-back m when no checkpoint fixes it.
    #[arg(long)]
    pub m: Option<usize>,

    #[command(flatten)]
    pub horizon: HorizonArgs,

    #[arg(long, default_value_t = 1)]
    pub threads: usize,

    /// Write 0 in the seconds column so reports are reproducible.
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Debug, Args)]
pub struct AttentionArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub out: OutArgs,

    #[arg(long, value_name = "PATH")]
    pub checkpoint: PathBuf,

    /// Only these link ids (comma-separated).
    #[arg(long = "select-links", value_name = "IDS")]
    pub select_links: Option<String>,

    /// Keep every STRIDE-th test anchor.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub stride: u64,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[command(flatten)]
    pub out: OutArgs,

    /// Hop orders to train, comma-separated.
    #[arg(long, value_name = "LIST", default_value = "0,1,2,3")]
    pub ks: String,
}

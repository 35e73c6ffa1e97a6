//! Command-line arguments. Each command's struct is also its config-file
//! schema: keys are the long flag names.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "tvvar", version, about = "Time-varying VAR(1) estimation from single time series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a time-varying VAR dataset and its ground truth.
    Simulate(SimulateArgs),
    /// Fit a stationary or time-varying VAR model.
    Fit(FitArgs),
    /// Select the kernel bandwidth by time-stratified held-out prediction error.
    Bwselect(BwselectArgs),
    /// Block-bootstrap the sampling distribution of a fitted model.
    Resample(ResampleArgs),
    /// Nodewise prediction errors (RMSE, R2) of a fitted model.
    Predict(PredictArgs),
    /// Score fitted models against simulation truths.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SimulateArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Design preset: sim-a (p = 10, random graph) or sim-b (p = 20, upper triangular) [default: sim-a].
    #[arg(long)]
    pub preset: Option<String>,
    /// Number of time points [default: 530].
    #[arg(long)]
    pub n: Option<usize>,
    /// Random seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Magnitude of nonzero parameter functions [default: 0.35].
    #[arg(long)]
    pub theta: Option<f64>,
    /// Innovation variance [default: 0.1].
    #[arg(long)]
    pub noise_variance: Option<f64>,
    /// Output CSV for the simulated series (required).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output JSON for the ground truth (required).
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Worker threads [default: all cores].
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FitArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Input CSV with a header row; columns named time_norm, beep and day are detected.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Comma-separated value columns [default: all remaining columns].
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<String>>,
    /// Timestamp column, normalized to [0, 1].
    #[arg(long)]
    pub time: Option<String>,
    /// Within-day notification index column.
    #[arg(long)]
    pub beep: Option<String>,
    /// Day index column.
    #[arg(long)]
    pub day: Option<String>,
    /// glm, glm-l1, ks, ks-l1, gam or gam-st [default: ks-l1].
    #[arg(long)]
    pub method: Option<String>,
    /// Comma-separated lags [default: 1].
    #[arg(long, value_delimiter = ',')]
    pub lags: Option<Vec<usize>>,
    /// Number of equally spaced estimation points [default: 20].
    #[arg(long)]
    pub estpoints: Option<usize>,
    /// Kernel bandwidth (ks, ks-l1).
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Select the bandwidth before fitting instead of passing one.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub bwselect: Option<bool>,
    /// Candidate bandwidths for --bwselect [default: 10 values in 0.01..1].
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    /// Basis dimension for gam, gam-st [default: chosen from n and p].
    #[arg(long)]
    pub k: Option<usize>,
    /// Upper limit of the automatic basis dimension [default: 10].
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Standardize variables before fitting [default: true].
    #[arg(long)]
    pub standardize: Option<bool>,
    /// Cross-validation folds for the lasso penalty [default: 10].
    #[arg(long)]
    pub folds: Option<usize>,
    /// Random seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output model JSON (required).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads [default: all cores].
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct BwselectArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Input CSV with a header row; columns named time_norm, beep and day are detected.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Comma-separated value columns [default: all remaining columns].
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<String>>,
    /// Timestamp column, normalized to [0, 1].
    #[arg(long)]
    pub time: Option<String>,
    /// Within-day notification index column.
    #[arg(long)]
    pub beep: Option<String>,
    /// Day index column.
    #[arg(long)]
    pub day: Option<String>,
    /// ks or ks-l1 [default: ks-l1].
    #[arg(long)]
    pub method: Option<String>,
    /// Comma-separated lags [default: 1].
    #[arg(long, value_delimiter = ',')]
    pub lags: Option<Vec<usize>>,
    /// Candidate bandwidths [default: 10 values in 0.01..1].
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    /// Number of random test sets [default: 1].
    #[arg(long)]
    pub bw_folds: Option<usize>,
    /// Held-out occasions per test set [default: ceil((0.2 n)^(2/3))].
    #[arg(long)]
    pub foldsize: Option<usize>,
    /// Standardize variables before fitting [default: true].
    #[arg(long)]
    pub standardize: Option<bool>,
    /// Cross-validation folds for the lasso penalty [default: 10].
    #[arg(long)]
    pub folds: Option<usize>,
    /// Random seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV of mean error per candidate (required).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads [default: all cores].
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ResampleArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Input CSV with a header row; columns named time_norm, beep and day are detected.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Comma-separated value columns [default: all remaining columns].
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<String>>,
    /// Timestamp column, normalized to [0, 1].
    #[arg(long)]
    pub time: Option<String>,
    /// Within-day notification index column.
    #[arg(long)]
    pub beep: Option<String>,
    /// Day index column.
    #[arg(long)]
    pub day: Option<String>,
    /// Model JSON written by `fit`; its settings are reused for every replicate.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Number of bootstrap replicates [default: 50].
    #[arg(long)]
    pub nb: Option<usize>,
    /// Number of contiguous blocks [default: 10].
    #[arg(long)]
    pub blocks: Option<usize>,
    /// Explicit per-replicate seeds (overrides --nb and --seed).
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Quantile probabilities [default: 0.05,0.95].
    #[arg(long, value_delimiter = ',')]
    pub quantiles: Option<Vec<f64>>,
    /// Master seed for replicate seeds [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output JSON with samples and quantiles (required).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional long-format quantile CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Worker threads [default: all cores].
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct PredictArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Input CSV with a header row; columns named time_norm, beep and day are detected.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Comma-separated value columns [default: all remaining columns].
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<String>>,
    /// Timestamp column, normalized to [0, 1].
    #[arg(long)]
    pub time: Option<String>,
    /// Within-day notification index column.
    #[arg(long)]
    pub beep: Option<String>,
    /// Day index column.
    #[arg(long)]
    pub day: Option<String>,
    /// Model JSON written by `fit`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Comma-separated combination rules: weighted, closest [default: weighted].
    #[arg(long, value_delimiter = ',')]
    pub tv_method: Option<Vec<String>>,
    /// Output CSV (required).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional JSON report with per-estimation-point errors.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Worker threads [default: all cores].
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct EvaluateArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Comma-separated model JSON files.
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<PathBuf>>,
    /// Comma-separated truth JSON files, one per model.
    #[arg(long, value_delimiter = ',')]
    pub truths: Option<Vec<PathBuf>>,
    /// Quantile probabilities [default: 0.25,0.75].
    #[arg(long, value_delimiter = ',')]
    pub probs: Option<Vec<f64>>,
    /// Magnitude at or below which an estimate counts as zero [default: 0].
    #[arg(long)]
    pub zero_tol: Option<f64>,
    /// Output long-format CSV (required).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional JSON report.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Directory for SVG plots.
    #[arg(long)]
    pub plots: Option<PathBuf>,
    /// Worker threads [default: all cores].
    #[arg(long)]
    pub threads: Option<usize>,
}

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(name = "araucana", version, about = "Local tree-surrogate explanations for black-box models")]
pub struct Cli {
    /// Master seed; every random component derives its own stream from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads for fidelity evaluation. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,

    /// Output directory for artifacts and the run manifest.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Generate a synthetic dataset (data.csv, schema.json, optional test.csv).
    Synth(SynthArgs),
    /// Train a reference black box and save it as model.json.
    Train(TrainArgs),
    /// Explain one prediction with an IF-THEN rule.
    Explain(ExplainArgs),
    /// Measure how often each explainer agrees with the black box on a test set.
    Evaluate(EvaluateArgs),
    /// Answer line-delimited JSON prediction requests on stdin with a saved model.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum GenArg {
    XorMixed,
    Moons2d,
    ImbalancedMixed,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long = "gen")]
    pub generator: GenArg,
    #[arg(long)]
    pub rows: usize,
    /// Extra rows written to test.csv, sharing the training schema.
    #[arg(long)]
    pub test_rows: Option<usize>,
    /// Fraction of the positive class.
    #[arg(long)]
    pub minority: Option<f64>,
    #[arg(long)]
    pub numeric: Option<usize>,
    #[arg(long)]
    pub categorical: Option<usize>,
    /// Numeric target instead of a class label.
    #[arg(long)]
    pub regression: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskArg {
    Auto,
    Classification,
    Regression,
}

#[derive(Debug, Args, Serialize)]
pub struct DataArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Target column; defaults to the schema's target, else `target`.
    #[arg(long)]
    pub target: Option<String>,
    /// How to type an undeclared target column.
    #[arg(long, value_enum, default_value_t = TaskArg::Auto)]
    pub task: TaskArg,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKindArg {
    Forest,
    Knn,
}

#[derive(Debug, Args, Serialize)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 100)]
    pub n_trees: usize,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Metric used by the k-NN model.
    #[arg(long, default_value = "gower")]
    pub knn_distance: String,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum)]
    pub model: ModelKindArg,
    #[command(flatten)]
    pub params: ModelArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct OracleArgs {
    /// builtin:forest | builtin:knn | cmd:"<command>" | precomputed:<column>
    #[arg(long)]
    pub oracle: String,
    /// Saved model for builtin oracles; without it one is trained on --data.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Seconds to wait for each subprocess reply.
    #[arg(long, default_value_t = 30.0)]
    pub oracle_timeout: f64,
    #[command(flatten)]
    pub params: ModelArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct PipelineArgs {
    #[arg(long, default_value_t = 100)]
    pub n_neighbors: usize,
    #[arg(long, default_value = "gower")]
    pub distance: String,
    /// balance | fixed:N | off
    #[arg(long, default_value = "balance")]
    pub smote_policy: String,
    #[arg(long, default_value_t = 5)]
    pub smote_k: usize,
    /// gini | entropy (regression always uses mse)
    #[arg(long, default_value = "gini")]
    pub criterion: String,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub min_samples_split: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatArg {
    Text,
    Json,
}

#[derive(Debug, Args, Serialize)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub oracle: OracleArgs,
    /// Row of --data to explain.
    #[arg(long, conflicts_with = "instance", required_unless_present = "instance")]
    pub index: Option<usize>,
    /// Instance as a JSON array or object keyed by feature name.
    #[arg(long)]
    pub instance: Option<String>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long, value_enum, default_value_t = FormatArg::Text)]
    pub format: FormatArg,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, conflicts_with = "test_frac", required_unless_present = "test_frac")]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub test_frac: Option<f64>,
    #[command(flatten)]
    pub oracle: OracleArgs,
    /// Comma-separated: araucana, linear
    #[arg(long, default_value = "araucana")]
    pub explainers: String,
    /// Linear baseline kernel width; defaults to 0.75 * sqrt(encoded dimension).
    #[arg(long)]
    pub kernel_width: Option<f64>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct ServeArgs {
    #[arg(long)]
    pub model: PathBuf,
}

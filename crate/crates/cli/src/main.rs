//! `routekit`: the routing pipeline as batch subcommands.
//!
//! Exit status is 0 on success, 1 on a data or validation failure (with a
//! JSON error document on stderr), and 2 on a usage error.

mod commands;
mod inputs;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "routekit", version, about = "Cost-aware routing over dynamic LLM pools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a mixture spec (JSON).
    Synth(SynthArgs),
    /// Check a dataset for consistency and print a JSON summary.
    Validate(ValidateArgs),
    /// Fit K-means over prompt embeddings; optionally train a learned soft-assignment map.
    Cluster(ClusterArgs),
    /// Compute LLM feature vectors (JSON lines) from validation labels or pairwise comparisons.
    EmbedLlm(EmbedArgs),
    /// Route prompts over a pool and write one decision JSON per line.
    Route(RouteArgs),
    /// Sweep the cost multiplier (or ZeroRouter budget) and write a deferral-curve CSV.
    Sweep(SweepArgs),
    /// Select the cluster or neighbour count by validation deferral-curve area.
    Tune(TuneArgs),
    /// Compute area, half-range area and quality-neutral cost from a curve CSV.
    Report(ReportArgs),
    /// Run a two-sided sign test between two numeric columns of a CSV.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Mixture spec JSON.
    #[arg(long)]
    spec: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Number of prompts for a single dataset written directly into --out.
    #[arg(long, conflicts_with_all = ["n_train", "n_val", "n_test"], required_unless_present_all = ["n_train", "n_val", "n_test"])]
    n_prompts: Option<usize>,
    /// Training prompts; with --n-val and --n-test writes train/, val/ and test/ under --out.
    #[arg(long, requires_all = ["n_val", "n_test"])]
    n_train: Option<usize>,
    /// Validation prompts.
    #[arg(long, requires_all = ["n_train", "n_test"])]
    n_val: Option<usize>,
    /// Test prompts.
    #[arg(long, requires_all = ["n_train", "n_val"])]
    n_test: Option<usize>,
    /// Overrides the seed stored in the mixture file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Prompts (JSON lines).
    #[arg(long)]
    prompts: PathBuf,
    /// Labels CSV.
    #[arg(long)]
    labels: PathBuf,
    /// Pool CSV (llm_id,cost).
    #[arg(long)]
    pool: PathBuf,
    /// Optional pairwise comparisons CSV to check against the prompts and pool.
    #[arg(long)]
    pairwise: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ArchArg {
    Linear,
    TwoHidden,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Debug, Args)]
struct ClusterArgs {
    /// Training prompts (JSON lines).
    #[arg(long)]
    prompts: PathBuf,
    /// Number of clusters.
    #[arg(long)]
    k: usize,
    /// Random seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Independent K-means restarts; the lowest inertia wins.
    #[arg(long, default_value_t = 1)]
    restarts: usize,
    /// Lloyd iteration cap per restart.
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    /// Stop when inertia improves by at most this fraction.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Output cluster model JSON.
    #[arg(long)]
    out: PathBuf,
    /// Also train a learned soft-assignment map and write it here.
    #[arg(long, requires = "labels")]
    map_out: Option<PathBuf>,
    /// Training labels CSV for the learned map.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Training LLMs (comma separated); default every label column.
    #[arg(long, value_delimiter = ',')]
    llms: Vec<String>,
    /// Learned map architecture.
    #[arg(long, value_enum, default_value_t = ArchArg::Linear)]
    arch: ArchArg,
    /// Training epochs.
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    /// Mini-batch size.
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    /// Learning rate.
    #[arg(long, default_value_t = 0.005)]
    lr: f64,
    /// Optimizer.
    #[arg(long, value_enum, default_value_t = OptimizerArg::Adam)]
    optimizer: OptimizerArg,
    /// Clamp predicted error probabilities to [eps, 1 - eps] inside the log loss.
    #[arg(long, default_value_t = 1e-6)]
    clamp_eps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FeatureKindArg {
    ClusterError,
    RawError,
    BtlCluster,
}

#[derive(Debug, Args)]
struct EmbedArgs {
    /// Feature kind.
    #[arg(long, value_enum, default_value_t = FeatureKindArg::ClusterError)]
    kind: FeatureKindArg,
    /// Cluster model JSON (cluster_error and btl_cluster).
    #[arg(long, required_if_eq_any = [("kind", "cluster-error"), ("kind", "btl-cluster")])]
    model: Option<PathBuf>,
    /// Validation prompts (JSON lines).
    #[arg(long)]
    prompts: PathBuf,
    /// Validation labels CSV (cluster_error and raw_error).
    #[arg(long, required_if_eq_any = [("kind", "cluster-error"), ("kind", "raw-error")])]
    labels: Option<PathBuf>,
    /// Pairwise comparisons CSV (btl_cluster).
    #[arg(long, required_if_eq("kind", "btl-cluster"))]
    pairwise: Option<PathBuf>,
    /// LLMs to embed (comma separated); default every LLM in the input.
    #[arg(long, value_delimiter = ',')]
    llms: Vec<String>,
    /// Pseudo-count added to both directions of every compared pair (btl_cluster).
    #[arg(long, default_value_t = 0.1)]
    pseudo_count: f64,
    /// Output features (JSON lines).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RouterArg {
    Cluster,
    Learned,
    Knn,
    Zero,
}

#[derive(Debug, Args)]
struct RouterArgs {
    /// Router kind.
    #[arg(long, value_enum, default_value_t = RouterArg::Cluster)]
    router: RouterArg,
    /// Cluster model JSON (cluster) or learned map JSON (learned).
    #[arg(long, required_if_eq_any = [("router", "cluster"), ("router", "learned")])]
    model: Option<PathBuf>,
    /// Validation prompts the raw-error features were computed on (knn).
    #[arg(long, required_if_eq("router", "knn"))]
    val_prompts: Option<PathBuf>,
    /// Neighbour count (knn).
    #[arg(long, required_if_eq("router", "knn"))]
    k_neighbors: Option<usize>,
    /// LLM feature files (JSON lines); their union, in order, is the pool.
    #[arg(long, required = true, num_args = 1..)]
    features: Vec<PathBuf>,
    /// Pool CSV supplying each LLM's cost.
    #[arg(long)]
    pool: PathBuf,
}

#[derive(Debug, Args)]
struct RouteArgs {
    #[command(flatten)]
    router: RouterArgs,
    /// Prompts to route (JSON lines).
    #[arg(long)]
    prompts: PathBuf,
    /// Cost multiplier.
    #[arg(long)]
    lambda: f64,
    /// Output decisions (JSON lines); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    router: RouterArgs,
    /// Test prompts (JSON lines).
    #[arg(long)]
    prompts: PathBuf,
    /// Test labels CSV.
    #[arg(long)]
    labels: PathBuf,
    /// Cost multipliers (comma separated, increasing); default grid when omitted.
    #[arg(long, value_delimiter = ',')]
    lambdas: Vec<f64>,
    /// ZeroRouter budgets (comma separated, increasing); the hull costs when omitted.
    #[arg(long, value_delimiter = ',')]
    budgets: Vec<f64>,
    /// Output curve CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TuneRouterArg {
    Knn,
    Cluster,
    Learned,
}

#[derive(Debug, Args)]
struct TuneArgs {
    /// Router family.
    #[arg(long, value_enum, default_value_t = TuneRouterArg::Cluster)]
    router: TuneRouterArg,
    /// Training prompts (JSON lines).
    #[arg(long)]
    train_prompts: PathBuf,
    /// Training labels CSV.
    #[arg(long)]
    train_labels: PathBuf,
    /// Validation prompts (JSON lines).
    #[arg(long)]
    val_prompts: PathBuf,
    /// Validation labels CSV.
    #[arg(long)]
    val_labels: PathBuf,
    /// Pool CSV with the training LLMs' costs.
    #[arg(long)]
    pool: PathBuf,
    /// Training LLMs (comma separated); default every pool LLM.
    #[arg(long, value_delimiter = ',')]
    llms: Vec<String>,
    /// Candidate counts (comma separated); default grid from the validation size.
    #[arg(long, value_delimiter = ',')]
    candidates: Vec<usize>,
    /// Cost multipliers for the validation sweeps; default grid when omitted.
    #[arg(long, value_delimiter = ',')]
    lambdas: Vec<f64>,
    /// Random seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// K-means restarts per candidate.
    #[arg(long, default_value_t = 1)]
    restarts: usize,
    /// Learned map architecture.
    #[arg(long, value_enum, default_value_t = ArchArg::Linear)]
    arch: ArchArg,
    /// Learned map training epochs.
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    /// Output CSV (k,area,selected); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Curve CSV written by `sweep`.
    #[arg(long)]
    curve: PathBuf,
    /// Best single-LLM test quality, if known.
    #[arg(long, conflicts_with = "labels", required_unless_present = "labels")]
    peak_quality: Option<f64>,
    /// Test labels CSV to take the best single-LLM quality from.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Test LLMs (comma separated); default every label column.
    #[arg(long, value_delimiter = ',')]
    llms: Vec<String>,
    /// Output metrics JSON; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// CSV with one row per trial.
    #[arg(long)]
    input: PathBuf,
    /// Column for the first method.
    #[arg(long)]
    a: String,
    /// Column for the second method.
    #[arg(long)]
    b: String,
    /// Output JSON; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Validate(a) => commands::validate(a),
        Command::Cluster(a) => commands::cluster(a),
        Command::EmbedLlm(a) => commands::embed_llm(a),
        Command::Route(a) => commands::route(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Tune(a) => commands::tune(a),
        Command::Report(a) => commands::report(a),
        Command::Compare(a) => commands::compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let doc = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{doc}");
            ExitCode::from(1)
        }
    }
}

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "cotmol",
    version,
    about = "Behavior-graph analysis and synthesis of long chain-of-thought traces",
    propagate_version = true
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct Global {
    /// Master seed; per-task seeds are derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (0 = all logical cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Output file, or a directory that receives the default file name.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// TOML client configuration (keys as in the client config).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Answer model calls from this audit log instead of the network.
    #[arg(long, global = true, value_name = "LOG")]
    pub replay: Option<PathBuf>,
    /// Only print errors.
    #[arg(long, global = true)]
    pub quiet: bool,
    /// Report format; inferred from the --out extension when omitted.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Split raw trace text into steps.
    Segment(SegmentArgs),
    /// Label every edge of a corpus with a behavior.
    Annotate(AnnotateArgs),
    /// Transfer-graph estimation and comparison.
    #[command(subcommand)]
    Graph(GraphCmd),
    /// Folding metrics, enclosing balls and information phase space.
    #[command(subcommand)]
    Geometry(GeometryCmd),
    /// Attention-energy diagnostics and Monte Carlo checks.
    #[command(subcommand)]
    Energy(EnergyCmd),
    /// Synthesize traces by random walks over a transfer graph.
    Synth(SynthArgs),
    /// Corpus rewrites and distribution-shift reports.
    #[command(subcommand)]
    Transform(TransformCmd),
    /// Check an audit log and summarize its contents.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Segment(_) => "segment",
            Command::Annotate(_) => "annotate",
            Command::Graph(GraphCmd::Estimate(_)) => "graph estimate",
            Command::Graph(GraphCmd::Compare(_)) => "graph compare",
            Command::Graph(GraphCmd::Stability(_)) => "graph stability",
            Command::Geometry(GeometryCmd::Fold(_)) => "geometry fold",
            Command::Geometry(GeometryCmd::Meb(_)) => "geometry meb",
            Command::Geometry(GeometryCmd::Phase(_)) => "geometry phase",
            Command::Energy(EnergyCmd::Empirical(_)) => "energy empirical",
            Command::Energy(EnergyCmd::RopeMc(_)) => "energy rope-mc",
            Command::Energy(EnergyCmd::Ergodic(_)) => "energy ergodic",
            Command::Energy(EnergyCmd::Paths(_)) => "energy paths",
            Command::Synth(_) => "synth",
            Command::Transform(TransformCmd::Keywords(_)) => "transform keywords",
            Command::Transform(TransformCmd::Summarize(_)) => "transform summarize",
            Command::Transform(TransformCmd::Shift(_)) => "transform shift",
            Command::Replay(_) => "replay",
        }
    }
}

/// Settings for commands that call a model.
#[derive(Args, Debug, Clone, Serialize)]
pub struct ClientArgs {
    /// Base URL of a chat-completions endpoint (overrides config and env).
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
    /// Audit log of live calls [default: audit.jsonl next to the output].
    #[arg(long, value_name = "PATH")]
    pub audit: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct SegmentArgs {
    /// JSONL records with "text" (segmented) or "steps" (kept).
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
    /// Delimiters tried in order; backslash escapes \n and \t are expanded.
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub delimiters: Option<Vec<String>>,
}

#[derive(Args, Debug, Serialize)]
pub struct AnnotateArgs {
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
    /// Gold-labeled corpus; adds a macro-F1 agreement report.
    #[arg(long, value_name = "PATH")]
    pub gold: Option<PathBuf>,
    #[command(flatten)]
    pub client: ClientArgs,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphCmd {
    /// Estimate the transition matrix and marginal of a labeled corpus.
    Estimate(EstimateArgs),
    /// Correlation and divergence between two graphs or corpora.
    Compare(CompareArgs),
    /// Pairwise agreement of estimates over growing subsamples.
    Stability(StabilityArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct EstimateArgs {
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
    /// Pseudo-count added to every transition.
    #[arg(long, default_value_t = 0.0)]
    pub smoothing: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct CompareArgs {
    /// Transfer-graph JSON or labeled JSONL corpus.
    #[arg(long, value_name = "PATH")]
    pub a: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub b: PathBuf,
    /// Behaviors kept for the restricted correlation (codes or names).
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub behaviors: Option<Vec<String>>,
    #[arg(long, default_value_t = 0.0)]
    pub smoothing: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct StabilityArgs {
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
    /// Subsample sizes in traces.
    #[arg(long, value_delimiter = ',', default_value = "500,1000,2000,5000")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = 0.0)]
    pub smoothing: f64,
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub behaviors: Option<Vec<String>>,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeometryCmd {
    /// Per-edge step length, return distance, reconnection and cluster hops.
    Fold(FoldArgs),
    /// Minimum enclosing ball and volume per trace.
    Meb(MebArgs),
    /// Information phase-space trajectories.
    Phase(PhaseArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduce {
    /// Joint t-SNE of all steps in the file.
    Tsne,
    /// Use the embeddings as given.
    None,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ReduceArgs {
    #[arg(long, value_enum, default_value_t = Reduce::Tsne)]
    pub reduce: Reduce,
    #[arg(long, default_value_t = 3)]
    pub tsne_dim: usize,
    #[arg(long, default_value_t = 1000)]
    pub tsne_iters: usize,
    #[arg(long)]
    pub perplexity: Option<f64>,
    #[arg(long, default_value_t = 12.0)]
    pub early_exaggeration: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct FoldArgs {
    #[arg(long, value_name = "PATH")]
    pub labeled: PathBuf,
    /// JSONL embeddings or a single CMEB binary.
    #[arg(long, value_name = "PATH")]
    pub embeddings: PathBuf,
    /// Merge threshold: "auto" or a positive number.
    #[arg(long, default_value = "auto")]
    pub alpha: String,
    /// Cluster adjacency threshold as a multiple of alpha.
    #[arg(long, default_value_t = 2.0)]
    pub beta_factor: f64,
    #[arg(long, default_value_t = 3)]
    pub max_hops: usize,
    /// Count the edge's source step as history for the return distance.
    #[arg(long)]
    pub include_source: bool,
    #[command(flatten)]
    pub reduce: ReduceArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct MebArgs {
    #[arg(long, value_name = "PATH")]
    pub embeddings: PathBuf,
    /// Reference volume for a percentage change of the mean volume.
    #[arg(long)]
    pub baseline_volume: Option<f64>,
    #[arg(long, value_enum, default_value_t = Direction::Reduction)]
    pub direction: Direction,
    #[command(flatten)]
    pub reduce: ReduceArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Reduction,
    Expansion,
}

#[derive(Args, Debug, Serialize)]
pub struct PhaseArgs {
    /// JSONL records {"trace_id": str, "info": [f64, ...]}.
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnergyCmd {
    /// Bond energies from recorded attention and their ordering.
    Empirical(EmpiricalArgs),
    /// Monte Carlo check of rotary logits against their closed form.
    RopeMc(RopeArgs),
    /// Long-run mean energy of a behavior chain.
    Ergodic(ErgodicArgs),
    /// Soft-min energy over all paths of a step graph.
    Paths(PathsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Forward,
    Backward,
}

#[derive(Args, Debug, Serialize)]
pub struct EmpiricalArgs {
    #[arg(long, value_name = "PATH")]
    pub labeled: PathBuf,
    /// Directory with <trace id>.catt (or .attn.jsonl) and <trace id>.spans.json.
    #[arg(long, value_name = "DIR")]
    pub attention_dir: PathBuf,
    /// Step embeddings, needed when reflection edges are present.
    #[arg(long, value_name = "PATH")]
    pub embeddings: Option<PathBuf>,
    /// Attention files hold post-softmax weights instead of logits.
    #[arg(long)]
    pub weights: bool,
    #[arg(long, value_enum, default_value_t = Orientation::Forward)]
    pub explore: Orientation,
    #[arg(long, default_value_t = 1000)]
    pub resamples: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct RopeArgs {
    #[arg(long, default_value_t = 64)]
    pub dk: usize,
    /// geom:RHO0,GAMMA or const:RHO.
    #[arg(long, default_value = "geom:0.9,0.8")]
    pub rho: String,
    /// rotary[:BASE] or identity.
    #[arg(long, default_value = "rotary")]
    pub rotation: String,
    /// Deep, reflect and explore distances.
    #[arg(long, value_delimiter = ',', default_value = "1,4,16")]
    pub distances: Vec<usize>,
    /// Samples per distance.
    #[arg(long, default_value_t = 100_000)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = Sampler::Reduced)]
    pub sampler: Sampler,
    /// Also run this many finite-sample ordering experiments.
    #[arg(long, default_value_t = 0)]
    pub experiments: usize,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampler {
    Full,
    Reduced,
}

#[derive(Args, Debug, Serialize)]
pub struct ErgodicArgs {
    /// Transfer-graph JSON or labeled JSONL corpus.
    #[arg(long, value_name = "PATH")]
    pub graph: PathBuf,
    /// Mean energy per behavior, N,D,R,E order or N=..,D=.. pairs.
    #[arg(long, value_delimiter = ',')]
    pub mu: Vec<String>,
    /// zero, normal:SD[,SD,SD,SD] or uniform:HW[,HW,HW,HW].
    #[arg(long, default_value = "zero")]
    pub spread: String,
    #[arg(long, default_value_t = 100_000)]
    pub steps: usize,
    /// Also run this many random Boltzmann routing trials.
    #[arg(long, default_value_t = 0)]
    pub routing_trials: usize,
    #[arg(long, default_value_t = 8)]
    pub routing_candidates: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct PathsArgs {
    /// CATT binary or sparse JSONL attention.
    #[arg(long, value_name = "PATH")]
    pub attention: PathBuf,
    /// JSON list of [start, end) token ranges per step.
    #[arg(long, value_name = "PATH")]
    pub spans: PathBuf,
    #[arg(long)]
    pub weights: bool,
    /// Minimum step-level attention weight for an edge; 0.05 is a convention, not a derived value.
    #[arg(long, default_value_t = 0.05)]
    pub edge_threshold: f64,
    #[arg(long, default_value_t = 0)]
    pub source: usize,
    /// Target step [default: last step].
    #[arg(long)]
    pub target: Option<usize>,
    /// Enumerate paths when there are at most this many.
    #[arg(long, default_value_t = 10_000)]
    pub limit: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct SynthArgs {
    /// Target transfer graph.
    #[arg(long, value_name = "PATH")]
    pub graph: PathBuf,
    /// JSONL of {"question": str} objects or bare strings.
    #[arg(long, value_name = "PATH")]
    pub questions: PathBuf,
    /// Force a transition probability, e.g. deep=0.5.
    #[arg(long = "override", value_name = "BEHAVIOR=P")]
    pub override_: Option<String>,
    #[arg(long, default_value_t = 16)]
    pub max_steps: usize,
    #[arg(long, default_value = "explore")]
    pub start: String,
    /// Only the last N steps go into the rationale.
    #[arg(long)]
    pub window: Option<usize>,
    /// Keep walking after a boxed answer.
    #[arg(long)]
    pub no_stop: bool,
    #[command(flatten)]
    pub client: ClientArgs,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformCmd {
    /// Replace or remove behavior keywords.
    Keywords(KeywordArgs),
    /// Compress each trace with a model.
    Summarize(SummarizeArgs),
    /// Marginal total variation and matrix correlation between two graphs.
    Shift(ShiftArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct KeywordArgs {
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
    /// plan1, plan2 or removal.
    #[arg(long)]
    pub plan: String,
    /// Keyword table TSV [default: built-in].
    #[arg(long, value_name = "PATH")]
    pub table: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct SummarizeArgs {
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
    #[command(flatten)]
    pub client: ClientArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct ShiftArgs {
    #[arg(long, value_name = "PATH")]
    pub a: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub b: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub smoothing: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct ReplayArgs {
    /// Audit log to check.
    #[arg(value_name = "LOG")]
    pub log: PathBuf,
}

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Generative-retrieval experiments: build a corpus, teacher indexes and
/// training data, train the docid generator, then probe and evaluate it.
///
/// Every artifact lives under the work directory; each output directory
/// gets a manifest.json recording the resolved configuration and seeds.
/// Settings come from built-in defaults, then `--config`, then flags.
#[derive(Debug, Parser)]
#[command(name = "dsilab", version)]
pub struct Cli {
    /// TOML experiment configuration.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Work directory (overrides `work_dir`).
    #[arg(long, global = true, value_name = "DIR")]
    pub work: Option<PathBuf>,

    /// Root seed (overrides `seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read a JSONL corpus and assign docids.
    Ingest(IngestArgs),
    /// Build and persist a BM25 or dense index over the corpus.
    Index(IndexArgs),
    /// Build the training fragments and distillation signals for a mode.
    BuildData(BuildDataArgs),
    /// Train the docid generator on the built data.
    Train(TrainArgs),
    /// Run an IR-ability probe against a system.
    Probe(ProbeArgs),
    /// Score a TREC run against qrels, optionally against a second run.
    Evaluate(EvaluateArgs),
    /// Retrieve for every topic and write a TREC run.
    ExportRun(ExportRunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Naive,
    Semantic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IndexKind {
    Bm25,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SystemKind {
    Student,
    Bm25,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Index,
    Retrieve,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// JSONL file with `docid` (optional) and `text` fields.
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub ids: Option<SchemeArg>,
    /// Semantic-id branching factor.
    #[arg(long)]
    pub branching: Option<usize>,
    /// Semantic-id leaf size.
    #[arg(long)]
    pub leaf_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[arg(value_enum)]
    pub kind: IndexKind,
    /// Dense projection dimension.
    #[arg(long)]
    pub dimension: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BuildDataArgs {
    /// baseline, merge, distill, d+m or multi.
    #[arg(long)]
    pub mode: Option<String>,
    /// Which persisted index acts as teacher.
    #[arg(long, value_enum)]
    pub teacher: Option<IndexKind>,
    /// Training topics, `qid<TAB>text`.
    #[arg(long, value_name = "FILE")]
    pub topics: Option<PathBuf>,
    /// Qrels giving each training topic its documents.
    #[arg(long, value_name = "FILE")]
    pub qrels: Option<PathBuf>,
    /// `doc_key<TAB>query` file replacing generated pseudo queries.
    #[arg(long, value_name = "FILE")]
    pub pseudo_queries: Option<PathBuf>,
    /// Keep every fragment instead of filtering by teacher recall.
    #[arg(long)]
    pub no_filter: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Stop after this many optimizer steps.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SystemArgs {
    #[arg(long, value_enum)]
    pub system: SystemKind,
    /// Student task mode (default: retrieve when trained with lists).
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    #[arg(long)]
    pub beam: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[command(subcommand)]
    pub probe: ProbeCommand,
}

#[derive(Debug, Subcommand)]
pub enum ProbeCommand {
    /// Self-retrieval Hits@1 with leading tokens and training pseudo queries.
    Exclusivity(ExclusivityArgs),
    /// Hits with the owner's best chunks for each judged topic.
    Completeness(ReferenceProbeArgs),
    /// Relevance-ordering scores along the result list.
    Ros(ReferenceProbeArgs),
}

#[derive(Debug, Args)]
pub struct ExclusivityArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    /// Comma-separated leading-token cutoffs.
    #[arg(long, value_delimiter = ',')]
    pub cutoffs: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct ReferenceProbeArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    /// Independent relevance judge.
    #[arg(long, value_enum, default_value = "dense")]
    pub reference: IndexKind,
    #[arg(long, value_name = "FILE")]
    pub topics: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub qrels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// TREC run to score.
    #[arg(long, value_name = "FILE")]
    pub run: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub qrels: Option<PathBuf>,
    /// Second run for a paired t-test per metric.
    #[arg(long, value_name = "FILE")]
    pub compare: Option<PathBuf>,
    /// Output name under `eval/` (default: the run's directory name).
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub p10_threshold: Option<u32>,
}

#[derive(Debug, Args)]
pub struct ExportRunArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long, value_name = "FILE")]
    pub topics: Option<PathBuf>,
    /// Results per topic.
    #[arg(long)]
    pub k: Option<usize>,
    /// Run tag (default: the system name).
    #[arg(long)]
    pub tag: Option<String>,
}

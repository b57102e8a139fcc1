use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "turnlink", version, about = "Responsivity annotation, agreement, metrics and clustering for conversation transcripts")]
pub struct Cli {
    /// TOML run configuration; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate transcripts and write them in canonical form.
    Ingest(IngestArgs),
    /// Produce responsivity links with the similarity or LLM backend.
    Annotate(AnnotateArgs),
    /// Merge machine runs or human annotators into one annotation.
    Consolidate(ConsolidateArgs),
    /// Pairwise Jaccard agreement between annotation methods.
    Agree(AgreeArgs),
    /// Conversation-level features from transcripts and annotations.
    Features(FeaturesArgs),
    /// Standardize, reduce and cluster a features table.
    Cluster(ClusterArgs),
    /// Draw a conversation map as SVG.
    Render(RenderArgs),
    /// Collect run outputs into one directory with a hash manifest.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Transcript files or directories of `*.json` transcripts.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Backend {
    Embedding,
    Llm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Record,
    Replay,
    Live,
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    /// Canonical transcripts (files or directories).
    #[arg(required = true)]
    pub transcripts: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub backend: Backend,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub window: Option<usize>,

    /// Cosine threshold for the embedding backend.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Precomputed embeddings (JSON map of text hash to vector).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Base URL of an embedding service.
    #[arg(long)]
    pub embed_url: Option<String>,
    /// Persistent embedding cache file.
    #[arg(long)]
    pub embed_cache: Option<PathBuf>,

    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Exchange cache directory (required for the LLM backend).
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub min_count: Option<usize>,
    /// Directory with `stage{1,2,3}_{system,user}.txt` overrides.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    #[arg(long)]
    pub method_id: Option<String>,
}

#[derive(Debug, Args)]
pub struct ConsolidateArgs {
    /// Annotation files for one conversation.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Treat inputs as human annotators (keep links at least half submitted).
    #[arg(long)]
    pub human: bool,
    /// Minimum number of runs containing a link (machine runs only).
    #[arg(long, conflicts_with = "human")]
    pub min_count: Option<usize>,
    #[arg(long)]
    pub method_id: Option<String>,
}

#[derive(Debug, Args)]
pub struct AgreeArgs {
    /// Annotation files; grouped into sources by method id.
    #[arg(required = true, num_args = 2..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Leave out turns where both sources have no links.
    #[arg(long)]
    pub skip_empty_pairs: bool,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long, required = true, num_args = 1..)]
    pub transcripts: Vec<PathBuf>,
    #[arg(long, required = true, num_args = 1..)]
    pub annotations: Vec<PathBuf>,
    /// Use annotations from this method when several are given.
    #[arg(long)]
    pub method: Option<String>,
    /// Emit only the 12-feature reduced preset.
    #[arg(long)]
    pub reduced: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Reduced,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Reducer {
    Pca,
    Neighbor,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub dims: Option<usize>,
    #[arg(long, value_enum)]
    pub reducer: Option<Reducer>,
    #[arg(long)]
    pub min_cluster_size: Option<usize>,
    #[arg(long)]
    pub min_samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub transcript: PathBuf,
    #[arg(long)]
    pub annotation: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub no_facilitator_accent: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directory holding agreement/, features/, clusters/ and maps/.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ontorag::align::DEFAULT_EQUIVALENCE_THRESHOLD;
use ontorag::infiltrate::DEFAULT_MAX_APPEND_TOTAL;
use ontorag::ragstore::{DEFAULT_CHUNK_OVERLAP, DEFAULT_CHUNK_SIZE, DEFAULT_EMBED_DIM, DEFAULT_TOP_K};
use ontorag::subsume::{DEFAULT_MAX_PER_ANCHOR, DEFAULT_NEGATIVES_PER_POSITIVE, DEFAULT_SUBSUMPTION_THRESHOLD};

/// Ontology-driven prompt infiltration for retrieval-augmented generation.
#[derive(Debug, Parser)]
#[command(name = "ontorag", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Align two ontologies and write accepted equivalence mappings.
    Align(AlignArgs),
    /// Build and score the subsumption corpus from accepted mappings.
    Subsume(SubsumeArgs),
    /// Threshold a scored corpus into a subsumption dictionary.
    Dict(DictArgs),
    /// Augment prompts with dictionary terms.
    Infiltrate(InfiltrateArgs),
    /// Chunk and embed documents into a vector store.
    Ingest(IngestArgs),
    /// Answer a single question.
    Ask(AskArgs),
    /// Interactive question loop; `/quit` exits.
    Chat(ChatArgs),
    /// Run a question set with and without subsumptions and score both.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderSpec {
    Deterministic,
    Http(String),
}

impl FromStr for ProviderSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "deterministic" => Ok(ProviderSpec::Deterministic),
            _ => match s.strip_prefix("http:") {
                Some(rest) if !rest.is_empty() => Ok(ProviderSpec::Http(http_url(rest))),
                _ => Err(format!("expected `deterministic` or `http:<url>`, got `{s}`")),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LlmSpec {
    Echo,
    Http(String),
}

impl FromStr for LlmSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "echo" => Ok(LlmSpec::Echo),
            _ => match s.strip_prefix("http:") {
                Some(rest) if !rest.is_empty() => Ok(LlmSpec::Http(http_url(rest))),
                _ => Err(format!("expected `echo` or `http:<url>`, got `{s}`")),
            },
        }
    }
}

// `http:https://host/v1` and `http://host/v1` both name the URL after the prefix.
fn http_url(rest: &str) -> String {
    if rest.starts_with("//") {
        format!("http:{rest}")
    } else {
        rest.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScorerKind {
    Lexical,
    Embedding,
}

#[derive(Debug, Clone, Args)]
pub struct EmbedArgs {
    /// `deterministic` or `http:<url>`.
    #[arg(long, env = "ONTORAG_PROVIDER", default_value = "deterministic")]
    pub provider: ProviderSpec,
    #[arg(long, env = "ONTORAG_EMBED_DIM", default_value_t = DEFAULT_EMBED_DIM)]
    pub embed_dim: usize,
    /// Model name sent to an HTTP embedding endpoint.
    #[arg(long, env = "ONTORAG_EMBED_MODEL", default_value = "text-embedding-3-small")]
    pub embed_model: String,
}

#[derive(Debug, Clone, Args)]
pub struct LlmArgs {
    /// `echo` or `http:<url>`.
    #[arg(long, env = "ONTORAG_LLM", default_value = "echo")]
    pub llm: LlmSpec,
    #[arg(long, env = "ONTORAG_LLM_MODEL", default_value = "gpt-3.5-turbo")]
    pub llm_model: String,
}

#[derive(Debug, Clone, Args)]
pub struct ScorerArgs {
    #[arg(long, value_enum, env = "ONTORAG_SCORER", default_value = "lexical")]
    pub scorer: ScorerKind,
    #[command(flatten)]
    pub embed: EmbedArgs,
}

#[derive(Debug, Clone, Args)]
pub struct InfiltrationArgs {
    #[arg(long, env = "ONTORAG_MAX_APPEND", default_value_t = DEFAULT_MAX_APPEND_TOTAL)]
    pub max_append: usize,
    /// Also match dictionary keys within edit distance 1.
    #[arg(long)]
    pub fuzzy: bool,
    /// Append raw terms instead of a `(related: ...)` suffix.
    #[arg(long)]
    pub bare: bool,
}

#[derive(Debug, Clone, Args)]
pub struct RetrievalArgs {
    #[arg(long, env = "ONTORAG_K", default_value_t = DEFAULT_TOP_K)]
    pub k: usize,
    #[arg(long, overrides_with = "without_subsumptions")]
    pub with_subsumptions: bool,
    #[arg(long, overrides_with = "with_subsumptions")]
    pub without_subsumptions: bool,
}

impl RetrievalArgs {
    pub fn use_subsumptions(&self) -> bool {
        !self.without_subsumptions
    }
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, env = "ONTORAG_ALIGN_THRESHOLD", default_value_t = DEFAULT_EQUIVALENCE_THRESHOLD)]
    pub threshold: f64,
    /// Score the full cross product instead of token-blocked candidates.
    #[arg(long)]
    pub no_blocking: bool,
    #[command(flatten)]
    pub scorer: ScorerArgs,
}

#[derive(Debug, Args)]
pub struct SubsumeArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    /// Mappings TSV written by `align`.
    #[arg(long)]
    pub mappings: PathBuf,
    /// Scored corpus TSV.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, env = "ONTORAG_NEGATIVES", default_value_t = DEFAULT_NEGATIVES_PER_POSITIVE)]
    pub negatives: usize,
    #[arg(long, env = "ONTORAG_SEED", default_value_t = 42)]
    pub seed: u64,
    #[command(flatten)]
    pub scorer: ScorerArgs,
}

#[derive(Debug, Args)]
pub struct DictArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    /// Scored corpus TSV written by `subsume`.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Dictionary JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the accepted subsumptions as TSV.
    #[arg(long)]
    pub accepted: Option<PathBuf>,
    #[arg(long, env = "ONTORAG_SUBSUME_THRESHOLD", default_value_t = DEFAULT_SUBSUMPTION_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, env = "ONTORAG_MAX_PER_ANCHOR", default_value_t = DEFAULT_MAX_PER_ANCHOR)]
    pub max_per_anchor: usize,
}

#[derive(Debug, Args)]
pub struct InfiltrateArgs {
    #[arg(long)]
    pub dict: PathBuf,
    /// Prompt to augment; one prompt per stdin line when omitted.
    pub prompt: Option<String>,
    /// Print `{matched_keys, appended_terms}` to stderr for each prompt.
    #[arg(long)]
    pub trace: bool,
    #[command(flatten)]
    pub infiltration: InfiltrationArgs,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Text documents; each file name becomes a document id.
    #[arg(required = true)]
    pub documents: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Existing store to extend; it is read, never modified.
    #[arg(long)]
    pub base: Option<PathBuf>,
    #[arg(long, env = "ONTORAG_CHUNK_SIZE", default_value_t = DEFAULT_CHUNK_SIZE)]
    pub chunk_size: usize,
    #[arg(long, env = "ONTORAG_OVERLAP", default_value_t = DEFAULT_CHUNK_OVERLAP)]
    pub overlap: usize,
    #[command(flatten)]
    pub embed: EmbedArgs,
}

#[derive(Debug, Args)]
pub struct SessionArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub dict: PathBuf,
    #[command(flatten)]
    pub retrieval: RetrievalArgs,
    #[command(flatten)]
    pub infiltration: InfiltrationArgs,
    #[command(flatten)]
    pub embed: EmbedArgs,
    #[command(flatten)]
    pub llm: LlmArgs,
}

#[derive(Debug, Args)]
pub struct AskArgs {
    pub prompt: String,
    #[command(flatten)]
    pub session: SessionArgs,
    /// Print appended terms and retrieved chunk ids.
    #[arg(long)]
    pub trace: bool,
    /// Write the full turn as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ChatArgs {
    #[command(flatten)]
    pub session: SessionArgs,
    #[arg(long)]
    pub trace: bool,
    /// Session log; one JSON turn per line, appended.
    #[arg(long)]
    pub log: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub dict: PathBuf,
    /// JSONL of `{"prompt", "ground_truth"}`.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Receives the per-condition turns and `tables.tsv`.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, env = "ONTORAG_K", default_value_t = DEFAULT_TOP_K)]
    pub k: usize,
    #[command(flatten)]
    pub infiltration: InfiltrationArgs,
    #[command(flatten)]
    pub embed: EmbedArgs,
    #[command(flatten)]
    pub llm: LlmArgs,
}

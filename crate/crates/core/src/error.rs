use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure reported by an external model provider (embedding, LLM or scorer).
#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("{0}")]
    Failed(String),
}

/// Pipeline stage of a single RAG turn, used to label provider failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Embed,
    Retrieve,
    Complete,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Embed => "embed",
            Stage::Retrieve => "retrieve",
            Stage::Complete => "complete",
        })
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid IRI {iri:?}: {reason}")]
    InvalidIri { iri: String, reason: &'static str },
    #[error("unknown class {0}")]
    UnknownClass(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("document {0:?} is already in the store")]
    DuplicateDocument(String),
    #[error("scorer {scorer} failed on ({source_iri}, {target_iri}): {message}")]
    Scorer {
        scorer: String,
        source_iri: String,
        target_iri: String,
        message: String,
    },
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
    #[error("record {index}: {source}")]
    Record {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True when the failure originates in an external model provider,
    /// looking through stage and record wrappers.
    pub fn is_provider(&self) -> bool {
        match self {
            Error::Provider(_) | Error::Scorer { .. } => true,
            Error::Stage { source, .. } | Error::Record { source, .. } => source.is_provider(),
            _ => false,
        }
    }

    pub(crate) fn at_stage(self, stage: Stage) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

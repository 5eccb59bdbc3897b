use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("empty token list at line {line}")]
    EmptyTokens { line: usize },

    #[error("duplicate doc id {id:?} at line {line}")]
    DuplicateId { id: String, line: usize },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("empty sequence")]
    EmptySequence,

    #[error("unknown doc id {id:?} referenced by {context}")]
    UnknownDocId { id: String, context: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("doc id {0:?} is already indexed")]
    DuplicateNode(String),

    #[error("bad index snapshot: {0}")]
    Snapshot(String),

    #[error("query {0:?} has no relevant documents")]
    NoRelevant(String),

    #[error("no positive labels")]
    NoPositives,

    #[error("utterance {0:?} has a score but no label")]
    MissingLabel(String),

    #[error("unknown method {0:?}")]
    UnknownMethod(String),

    #[error("missing input: {0}")]
    MissingInput(&'static str),

    #[error("acceptance threshold violated: {0}")]
    ThresholdViolated(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("failed to ingest {}: {reason}", path.display())]
    Ingest { path: PathBuf, reason: String },

    #[error("{}:{line}: {reason}", path.display())]
    ManifestParse { path: PathBuf, line: usize, reason: String },

    #[error("selection error: {0}")]
    Selection(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("comparison error: {0}")]
    Comparison(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("pipeline integrity error: {0}")]
    Integrity(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

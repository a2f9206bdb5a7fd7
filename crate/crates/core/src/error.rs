use std::path::PathBuf;

use thiserror::Error;

use crate::llm::Attempt;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    /// Records reference transcripts that have no human label.
    #[error("missing human labels for transcripts: {}", .missing.join(", "))]
    Coverage { missing: Vec<String> },

    #[error("{message}, row {row}")]
    Label { row: usize, message: String },

    #[error("unparseable response (no answer line): {raw:?}")]
    Unparseable { raw: String },

    #[error("transport error after {} attempt(s): {message}", .attempts.len())]
    Transport {
        message: String,
        attempts: Vec<Attempt>,
    },

    #[error("no mock fixture for prompt digest {digest}")]
    FixtureMiss { digest: String },

    #[error("consensus failure: {0}")]
    Consensus(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors that must stop a batch run instead of being recorded per item.
    pub fn is_fatal(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Io { .. })
    }
}

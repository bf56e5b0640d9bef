use thiserror::Error;

/// Error type shared by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's contract (dimension mismatch, bad
    /// argument combination, incompatible artifacts).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A forward operation produced a non-finite value.
    #[error("non-finite value produced by `{op}`")]
    NonFinite { op: &'static str },

    /// A data file failed to parse or validate.
    #[error("ingestion error at line {line}: {msg}")]
    Ingestion { line: usize, msg: String },

    /// An invalid run configuration (bad key, impossible split, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// A metric is undefined on the given input (e.g. single-class AUC).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// Training diverged or otherwise failed mid-run.
    #[error("training error at epoch {epoch}: {msg}")]
    Training { epoch: usize, msg: String },

    /// A binary container (checkpoint, stack cache) is malformed.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

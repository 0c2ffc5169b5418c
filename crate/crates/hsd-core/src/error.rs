use thiserror::Error;

/// Errors surfaced by the toolkit. Row-level data problems carry the file
/// location; everything else names the failing stage.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}, line {line}: {msg}")]
    Row {
        path: String,
        line: u64,
        msg: String,
    },

    #[error("augmentation error for sample {origin_id}: {msg}")]
    Augmentation { origin_id: String, msg: String },

    #[error("unknown label {0:?}")]
    UnknownLabel(String),

    #[error("training error at epoch {epoch}: {msg}")]
    Training { epoch: usize, msg: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("ensemble error: {0}")]
    Ensemble(String),

    #[error("unsupported backend: {0}")]
    UnsupportedBackend(String),

    #[error("explanation error: {0}")]
    Explain(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn row(path: impl Into<String>, line: u64, msg: impl Into<String>) -> Self {
        Error::Row {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the auditing pipeline.
#[derive(Debug, Error)]
pub enum MirageError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("undefined value: {0}")]
    Undefined(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<MirageError>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, MirageError>;

impl MirageError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MirageError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        MirageError::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}

/// Attaches the name of a pipeline stage to an error.
pub(crate) trait StageContext<T> {
    fn stage(self, stage: &str) -> Result<T>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, stage: &str) -> Result<T> {
        self.map_err(|e| MirageError::Stage {
            stage: stage.to_string(),
            source: Box::new(e),
        })
    }
}

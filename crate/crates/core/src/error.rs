use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value produced in {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch} (loss = {loss})")]
    Divergence { epoch: usize, loss: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("data error in {path}{}: {message}", offset.map(|o| format!(" at offset {o}")).unwrap_or_default())]
    Load {
        path: PathBuf,
        offset: Option<u64>,
        message: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("empty output configuration")]
    EmptyOutput,

    #[error("model has not been trained")]
    Untrained,

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("repetition {index} failed after {} completed: {source}", completed.len())]
    Repetition {
        index: usize,
        /// Values of the repetitions that finished before the failure.
        completed: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

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

    pub(crate) fn load(path: impl Into<PathBuf>, offset: Option<u64>, message: impl Into<String>) -> Self {
        Error::Load {
            path: path.into(),
            offset,
            message: message.into(),
        }
    }

    /// Wraps the error with the name of the pipeline stage it came from.
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// The error with any stage labels removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } | Error::Repetition { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Config(_) | Error::Json(_) => 2,
            Error::Load { .. } | Error::Data(_) | Error::Shape(_) | Error::EmptyOutput => 3,
            Error::Divergence { .. } | Error::NonFinite(_) | Error::Untrained => 4,
            Error::Io { .. } => 5,
            Error::Stage { .. } | Error::Repetition { .. } => unreachable!(),
        }
    }
}

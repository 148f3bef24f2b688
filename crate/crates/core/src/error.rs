use std::path::PathBuf;

use thiserror::Error;

use crate::env::TaskId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("unknown task {0:?} for this model")]
    UnknownTask(TaskId),

    #[error("{task:?} needs {required} states of history, got {got}")]
    InsufficientHistory {
        task: TaskId,
        required: usize,
        got: usize,
    },

    #[error("cannot sample from an empty {0}")]
    EmptySource(&'static str),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("expert for {task:?} failed {failures} of {episodes} episodes")]
    ExpertFailure {
        task: TaskId,
        failures: usize,
        episodes: usize,
    },

    #[error("non-finite value at step {step}: {what} (state dumped to {dump:?})")]
    NonFinite {
        step: u64,
        what: String,
        dump: Option<PathBuf>,
    },

    #[error("io error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

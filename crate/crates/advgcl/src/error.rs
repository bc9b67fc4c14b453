//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("missing dependency: {0}")]
    MissingDependency(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("training aborted at iteration {iteration}: {msg}")]
    TrainingAborted { iteration: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 for config/input problems, 3 for
    /// runtime numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) | Error::TrainingAborted { .. } => 3,
            _ => 2,
        }
    }
}

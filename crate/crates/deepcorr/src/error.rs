//! Error types shared across the crate.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("matrix not symmetric: {0}")]
    Symmetry(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("inconsistent state: {0}")]
    State(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("parse error at {path}:{location}: {message}")]
    Parse {
        path: String,
        location: String,
        message: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// CLI process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Input(_) | Error::Parse { .. } | Error::Data(_) | Error::Io(_) => 3,
            Error::Numeric(_)
            | Error::DegenerateSample(_)
            | Error::DegenerateVariance(_)
            | Error::Symmetry(_) => 4,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

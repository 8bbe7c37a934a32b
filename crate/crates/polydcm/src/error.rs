use thiserror::Error;

/// Errors produced by model construction, estimation, and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("NaN detected during estimation at iteration {iteration}: {context}")]
    NanDetected { iteration: usize, context: String },

    #[error("insufficient draws for convergence diagnostic: {0}")]
    InsufficientDraws(String),

    #[error("rank-deficient design matrix: {0}")]
    RankDeficient(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error on {path}: {message}")]
    Csv { path: String, message: String },

    #[error("JSON error on {path}: {message}")]
    Json { path: String, message: String },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

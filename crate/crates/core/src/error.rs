use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error("malformed dataset: {0}")]
    Structure(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate normalization scale: min = max = {0}")]
    DegenerateScale(f64),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("profile assembly failed: {0}")]
    Assembly(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: PathBuf, msg: String },

    #[error("{path}: {msg}")]
    File { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short category tag, used by the CLI for exit messages.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Parse { .. } | Error::Structure(_) | Error::Csv(_) => "data",
            Error::Dimension(_) | Error::Assembly(_) => "shape",
            Error::DegenerateScale(_) | Error::UndefinedMetric(_) | Error::Numerical(_) => "numeric",
            Error::Usage(_) | Error::Config(_) => "config",
            Error::Checkpoint { .. } | Error::File { .. } | Error::Io(_) => "io",
        }
    }
}

pub(crate) fn dim_check(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension(format!("{what}: expected {expected}, got {got}")));
    }
    Ok(())
}

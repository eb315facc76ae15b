use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("duplicate cell (business {business}, origin {origin}, dev {dev})")]
    DuplicateCell {
        business: String,
        origin: i64,
        dev: i64,
    },

    #[error("negative value {value} at {location}")]
    NegativeValue { value: f64, location: String },

    #[error("ragged panel: {0}")]
    RaggedPanel(String),

    #[error("missing upper-triangle cell (business {business}, origin {origin}, dev {dev})")]
    MissingCell {
        business: String,
        origin: i64,
        dev: i64,
    },

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("numerical failure in {context}: {msg}")]
    Numerical { context: String, msg: String },

    #[error("not enough draws: need at least {needed}, got {got}")]
    TooFewDraws { needed: usize, got: usize },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn numerical(context: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Numerical {
            context: context.into(),
            msg: msg.into(),
        }
    }

    /// Prefixes the context of a numerical failure, leaving other variants untouched.
    pub fn within(self, outer: impl AsRef<str>) -> Self {
        match self {
            Error::Numerical { context, msg } => Error::Numerical {
                context: format!("{}: {}", outer.as_ref(), context),
                msg,
            },
            other => other,
        }
    }

    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical { .. })
    }
}

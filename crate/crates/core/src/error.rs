use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: csv: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}: row {row}: {message}")]
    Row {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("feeder {feeder}: year gap between {before} and {after}")]
    YearGap {
        feeder: String,
        before: i32,
        after: i32,
    },

    #[error("duplicate year {year}{}", .feeder.as_ref().map(|f| format!(" for feeder {f}")).unwrap_or_default())]
    DuplicateYear { feeder: Option<String>, year: i32 },

    #[error("area history: year gap between {before} and {after}")]
    AreaYearGap { before: i32, after: i32 },

    #[error("missing year {year} ({what})")]
    MissingYear { year: i32, what: String },

    #[error("unknown feeder `{0}`")]
    UnknownFeeder(String),

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by invalid user input, as opposed to runtime failures.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Io { .. } => false,
            Error::Csv { source, .. } => !matches!(source.kind(), csv::ErrorKind::Io(_)),
            _ => true,
        }
    }
}

use std::path::PathBuf;

use crate::radiomap::GridPoint;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("no survey data")]
    NoSurveyData,

    #[error("no survey records to build from")]
    EmptyRecords,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("record {index} ({ap} at {point}) lies outside the {rows}x{cols} grid")]
    OutOfGrid {
        index: usize,
        ap: String,
        point: GridPoint,
        rows: u32,
        cols: u32,
    },

    #[error("record {index} ({ap} at {point}): {message}")]
    InvalidRecord {
        index: usize,
        ap: String,
        point: GridPoint,
        message: String,
    },

    #[error("empty sample list")]
    EmptySamples,

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("invalid AP filter: {0}")]
    InvalidFilter(String),

    #[error("no usable APs")]
    NoUsableAps,

    #[error("no fingerprints stored for technique {0}")]
    NoFingerprints(&'static str),

    #[error("query {index}: {source}")]
    Query {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("no estimates for {0}")]
    NoEstimates(String),

    #[error("unknown technique `{0}`")]
    UnknownTechnique(String),

    #[error("invalid environment: {0}")]
    InvalidEnv(String),

    #[error("unsupported file: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}

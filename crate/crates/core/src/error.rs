use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: length {len} is not a multiple of the {record}-byte record size")]
    Truncated {
        path: PathBuf,
        len: u64,
        record: usize,
    },

    #[error("non-finite value at point {index}")]
    NonFinite { index: usize },

    #[error("point {index} lies at the sensor origin")]
    PointAtOrigin { index: usize },

    #[error("shape mismatch for {what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: String,
        got: String,
    },

    #[error("class id {id} out of range (num classes {num_classes})")]
    ClassOutOfRange { id: u32, num_classes: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("stage `{stage}` failed on scan {scan}: {source}")]
    Stage {
        stage: &'static str,
        scan: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(what: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::ShapeMismatch {
            what,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str, scan: &str) -> Self {
        Error::Stage {
            stage,
            scan: scan.to_string(),
            source: Box::new(self),
        }
    }

    /// Process exit code: 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Numeric(_) => 3,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}

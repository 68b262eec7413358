use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix not positive definite after jitter retries ({context})")]
    NotPositiveDefinite { context: String },

    #[error("numerical failure in sequence {sequence} at t = {t}: {message}")]
    Numerical {
        sequence: usize,
        t: usize,
        message: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("data error at row {row}: {message}")]
    DataRow { row: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach a sequence/time location to a numerical failure.
    pub fn at(self, sequence: usize, t: usize) -> Self {
        match self {
            Error::NotPositiveDefinite { context } => Error::Numerical {
                sequence,
                t,
                message: format!("matrix not positive definite ({context})"),
            },
            Error::Numerical { message, .. } => Error::Numerical {
                sequence,
                t,
                message,
            },
            other => other,
        }
    }

    /// Record which sequence a numerical failure came from, keeping its time index.
    pub fn in_sequence(self, sequence: usize) -> Self {
        match self {
            Error::Numerical { t, message, .. } => Error::Numerical {
                sequence,
                t,
                message,
            },
            Error::NotPositiveDefinite { context } => Error::Numerical {
                sequence,
                t: 0,
                message: format!("matrix not positive definite ({context})"),
            },
            other => other,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidParameter(_) | Error::Json(_) => 2,
            Error::Data(_) | Error::DataRow { .. } | Error::Io { .. } | Error::DimensionMismatch(_) => 3,
            Error::NotPositiveDefinite { .. } | Error::Numerical { .. } => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors raised across the estimation, simulation and evaluation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("malformed artifact: {0}")]
    Json(#[from] serde_json::Error),

    #[error("schema mismatch: expected {expected} v{expected_version}, found {found} v{found_version}")]
    Schema {
        expected: String,
        expected_version: u32,
        found: String,
        found_version: u32,
    },

    /// Malformed input data (bad cells, ragged rows, ordering violations).
    #[error("data error: {0}")]
    Data(String),

    /// A precondition on dimensions or argument ranges does not hold.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A matrix that must be invertible / positive definite is not.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

macro_rules! ensure {
    ($cond:expr, $variant:ident, $($arg:tt)*) => {
        if !$cond {
            return Err($crate::error::Error::$variant(format!($($arg)*)));
        }
    };
}
pub(crate) use ensure;

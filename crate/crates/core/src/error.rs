use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid configuration value, missing key or malformed file.
    #[error("configuration error: {0}")]
    Config(String),

    /// Operation invoked on an input it does not support.
    #[error("usage error: {0}")]
    Usage(String),

    /// Parameters outside the regime an operation is derived for.
    #[error("regime error: {0}")]
    Regime(String),

    /// Series that does not converge for the given parameters.
    #[error("divergence: {0}")]
    Divergence(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    /// Estimated allocation exceeds the configured memory cap.
    #[error("resource error: {needed} bytes needed, cap is {cap} bytes ({what})")]
    Resource { what: String, needed: u64, cap: u64 },

    #[error("routing error: {0}")]
    Routing(String),

    #[error("sweep failed: {0}")]
    Sweep(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for this error.
    ///
    /// 2 usage, 3 configuration, 4 resource, 5 anything raised while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            Error::Config(_) | Error::Domain(_) | Error::Regime(_) => 3,
            Error::Resource { .. } => 4,
            Error::Divergence(_)
            | Error::Numerical(_)
            | Error::Routing(_)
            | Error::Sweep(_)
            | Error::Io { .. } => 5,
        }
    }
}

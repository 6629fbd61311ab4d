use std::path::PathBuf;

/// Errors raised by the simulator, pricer, oracle and dataset layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A model or configuration parameter violates its invariant.
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A sampler or pricer produced a non-finite value.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Input data is missing or inconsistent.
    #[error("data error: {0}")]
    Data(String),

    /// A requested day range exceeds the simulated horizon.
    #[error("range error: {0}")]
    Range(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file does not follow the expected schema.
    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by invalid user input rather than I/O or numerics.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Parameter { .. } | Error::Domain(_) | Error::Range(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

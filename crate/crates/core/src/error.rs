use std::path::PathBuf;

/// Errors raised by the simulator, the entropy family and the diagnostics.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An input lies outside the domain where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("config error: {0}")]
    Config(String),

    /// The scheme produced NaN or infinite values.
    #[error("non-finite value in `{field}` at cell {cell}, step {step}, t = {t:e}")]
    NonFinite {
        field: &'static str,
        cell: usize,
        step: usize,
        t: f64,
    },

    /// A diagnostic was asked for more than the trajectory can provide.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

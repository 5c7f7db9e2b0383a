use std::path::PathBuf;
use thiserror::Error;

/// Error type shared by every module in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an operation contract (wrong range tag, role, shape...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// An argument is outside its documented domain.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Rendering could not produce a usable sample.
    #[error("render failed: {0}")]
    Render(String),

    /// A computation produced NaN or infinity where a finite value is required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A file or byte stream does not match its declared format.
    #[error("malformed {what}: {detail}")]
    Format { what: String, detail: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(what: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Format { what: what.into(), detail: detail.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

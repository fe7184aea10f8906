use std::path::PathBuf;

/// Errors raised anywhere in the engine, pipeline or harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller violated an operation's preconditions (shape mismatch, bad option, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// Geometric input that has no defined result, e.g. a zero-length limb vector.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A dataset file failed schema or invariant validation.
    #[error("load error in {}{}: {message}", file.display(), row.map(|r| format!(" (row {r})")).unwrap_or_default())]
    Load {
        file: PathBuf,
        row: Option<usize>,
        message: String,
    },

    /// A model, report or config file could not be decoded.
    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn load(file: impl Into<PathBuf>, row: Option<usize>, message: impl Into<String>) -> Self {
        Error::Load {
            file: file.into(),
            row,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

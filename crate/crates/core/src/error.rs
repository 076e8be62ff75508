use std::path::PathBuf;

/// Errors produced by the pipeline stages.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Shapes or hyperparameters that cannot describe a valid model.
    #[error("configuration error: {0}")]
    Config(String),

    /// Data handed to an operation violates its preconditions.
    #[error("input error: {0}")]
    Input(String),

    /// Optimization diverged or produced non-finite values.
    #[error("training error: {0}")]
    Training(String),

    #[error("environment error: {0}")]
    Environment(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record at {location}: {message}")]
    Schema { location: String, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Prefixes the message with context, keeping the variant.
    pub fn context(self, ctx: impl std::fmt::Display) -> Self {
        match self {
            Error::Config(m) => Error::Config(format!("{ctx}: {m}")),
            Error::Input(m) => Error::Input(format!("{ctx}: {m}")),
            Error::Training(m) => Error::Training(format!("{ctx}: {m}")),
            Error::Environment(m) => Error::Environment(format!("{ctx}: {m}")),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

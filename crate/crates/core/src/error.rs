use thiserror::Error;

/// Errors raised anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("structural error: {0}")]
    Structure(String),

    #[error("configuration error:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical blow-up at t = {t} s in element {element}")]
    Numerical { t: f64, element: String },

    #[error("metric error: {0}")]
    Metric(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(vec![msg.into()])
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

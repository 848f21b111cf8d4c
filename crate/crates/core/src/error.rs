use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("unsupported SVG feature in <{element}>: {feature}")]
    UnsupportedFeature { element: String, feature: String },

    #[error("SVG parse error: {0}")]
    SvgParse(String),

    #[error("layer `{layer}` failed: {source}")]
    Layer {
        layer: String,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite loss at iteration {iteration}: {detail}")]
    NonFinite { iteration: usize, detail: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input (as opposed to failures while
    /// running on valid input).
    pub fn is_validation(&self) -> bool {
        match self {
            Error::InvalidArgument(_)
            | Error::DimensionMismatch(_)
            | Error::Manifest(_)
            | Error::UnsupportedFeature { .. }
            | Error::SvgParse(_)
            | Error::Image { .. }
            | Error::Json { .. } => true,
            Error::Io { source, .. } => source.kind() == std::io::ErrorKind::NotFound,
            Error::Layer { source, .. } => source.is_validation(),
            Error::NonFinite { .. } => false,
        }
    }
}

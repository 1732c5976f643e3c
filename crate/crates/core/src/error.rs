use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent shapes, extents or settings.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image error: {0}")]
    Image(String),

    /// Malformed container or weight file.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("corrupt weights: stored model-id {stored} but payload digests to {computed}")]
    CorruptWeights { stored: String, computed: String },

    #[error("weight schema error for `{name}`: {message}")]
    Schema { name: String, message: String },

    #[error("sequencing error: {0}")]
    Sequencing(String),

    /// Corrupt or truncated entropy-coded stream.
    #[error("decode error: {0}")]
    Decode(String),

    #[error("model mismatch: container expects {container}, weights are {weights}")]
    ModelMismatch { container: String, weights: String },

    /// A pluggable component broke its interface contract.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("metric error: {0}")]
    Metric(String),

    /// A symbol the caller asked to encode has no probability mass.
    #[error("symbol error: {0}")]
    Symbol(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn format(offset: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }

    pub(crate) fn decode(msg: impl Into<String>) -> Self {
        Error::Decode(msg.into())
    }
}

impl From<image::ImageError> for Error {
    fn from(e: image::ImageError) -> Self {
        match e {
            image::ImageError::IoError(io) => Error::Io(io),
            other => Error::Image(other.to_string()),
        }
    }
}

use thiserror::Error;

/// Broad class of a failure, used by front ends to choose exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad arguments or configuration.
    Usage,
    /// Missing, malformed or inconsistent data.
    Data,
    /// A numeric procedure could not produce a valid result.
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown layer `{0}`")]
    UnknownLayer(String),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("class index {index} out of range for {class_count} classes")]
    ClassOutOfRange { index: usize, class_count: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid image data: {0}")]
    InvalidImage(String),

    #[error("failed to decode `{path}`: {reason}")]
    Decode { path: String, reason: String },

    #[error("invalid {format} file: {reason}")]
    Format {
        format: &'static str,
        reason: String,
    },

    #[error("untrainable CAV: {0}")]
    UntrainableCav(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("I/O error on `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidConfig(_) | Error::UnknownLayer(_) | Error::ClassOutOfRange { .. } => {
                ErrorKind::Usage
            }
            Error::UntrainableCav(_) | Error::NonFinite(_) => ErrorKind::Numeric,
            _ => ErrorKind::Data,
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

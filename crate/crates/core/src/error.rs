use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The external encoder or decoder could not be run or exited with failure.
    #[error("codec `{codec}` unavailable: {diagnostics}")]
    CodecUnavailable { codec: String, diagnostics: String },

    /// Content payload could not be decoded.
    #[error("content decode error: {0}")]
    ContentDecode(String),

    /// Bad magic, unsupported version or inconsistent header.
    #[error("model stream format error: {0}")]
    Format(String),

    #[error("model stream truncated in {location}: {detail}")]
    Truncated { location: StreamLocation, detail: String },

    #[error("model stream corrupted in {location}: {detail}")]
    Corruption { location: StreamLocation, detail: String },

    #[error("training error: {0}")]
    Training(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Where in a model stream a decode failure happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamLocation {
    Header,
    InitialModel,
    /// Zero-based position of the update record in the file.
    Record(usize),
}

impl std::fmt::Display for StreamLocation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StreamLocation::Header => write!(f, "header"),
            StreamLocation::InitialModel => write!(f, "initial model"),
            StreamLocation::Record(i) => write!(f, "update record {i}"),
        }
    }
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures caused by a damaged or malformed model stream.
    pub fn is_stream_corruption(&self) -> bool {
        matches!(
            self,
            Error::Format(_) | Error::Truncated { .. } | Error::Corruption { .. }
        )
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("size mismatch for {path}: expected {expected} bytes, found {actual}")]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("malformed PGM {path}: {reason}")]
    Pgm { path: PathBuf, reason: String },

    #[error("invalid slice stack: {0}")]
    SliceStack(String),

    #[error("invalid phantom spec: {field}: {reason}")]
    InvalidSpec { field: String, reason: String },

    #[error("volume is empty")]
    EmptyVolume,

    #[error("histogram has no nonzero bins")]
    EmptyHistogram,

    #[error("invalid filter configuration: {0}")]
    FilterConfig(String),

    #[error("invalid camera: {0}")]
    Camera(String),

    #[error("invalid render parameters: {0}")]
    RenderParams(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("JSON error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

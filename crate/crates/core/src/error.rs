use std::path::PathBuf;

use thiserror::Error;

use crate::cloud::ChannelSchema;
use crate::loss::Pair;

#[derive(Debug, Error)]
pub enum Error {
    #[error("channel schema mismatch: expected {expected:?}, got {found:?}")]
    SchemaMismatch { expected: ChannelSchema, found: ChannelSchema },

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("prediction for pair {0} is missing")]
    MissingPair(Pair),

    #[error("no candidate overlapped the target raster{}", stage.map(|s| format!(" (stage {s})")).unwrap_or_default())]
    NoOverlap { stage: Option<usize> },

    #[error("empty input list")]
    EmptyList,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("degenerate scene: {sensor} sees only {count} points")]
    DegenerateScene { sensor: &'static str, count: usize },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("{key}: rotation block is not orthonormal (max deviation {deviation:.3e})")]
    NonRigid { key: String, deviation: f64 },

    #[error("file size {len} bytes is not a multiple of the {record}-byte record")]
    SizeMismatch { len: usize, record: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

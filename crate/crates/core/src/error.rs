use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{context}: {path}: {source}")]
    Io {
        context: &'static str,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("path does not exist: {0}")]
    MissingPath(PathBuf),
    #[error("split `{split}` under {root} contains no images")]
    EmptySplit { root: PathBuf, split: String },
    #[error("unknown split `{0}` (expected train, val or test)")]
    UnknownSplit(String),
    #[error("cannot decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },
    #[error("cannot encode {path}: {reason}")]
    Encode { path: PathBuf, reason: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("label ids not covered by the class map: {ids:?}")]
    UnmappedLabels { ids: Vec<u8> },
    #[error("no countable (non-ignore) pixels")]
    NoCountablePixels,
    #[error("spatial size {h}x{w} is not divisible by {multiple}")]
    SpatialSize { h: usize, w: usize, multiple: usize },
    #[error("channel mismatch: expected {expected}, got {got}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("feature map for downsampling rate {0} is missing")]
    MissingRate(usize),
    #[error("operation requires {expected} mode")]
    WrongMode { expected: &'static str },
    #[error("cannot upsample {from:?} to smaller size {to:?}")]
    Downscale { from: (usize, usize), to: (usize, usize) },
    #[error("iteration {iter} exceeds max_iter {max_iter}")]
    IterOutOfRange { iter: usize, max_iter: usize },
    #[error("no loss weights for active module {0}")]
    MissingLambda(String),
    #[error("non-finite loss at iteration {iteration}: {details}")]
    NonFiniteLoss { iteration: usize, details: String },
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),
    #[error("confusion matrix is empty")]
    EmptyConfusion,
    #[error("pixel ({y}, {x}) outside {h}x{w} map")]
    OutOfBounds { y: usize, x: usize, h: usize, w: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(context: &'static str, path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            context,
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

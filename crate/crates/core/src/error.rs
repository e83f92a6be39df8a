use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed IDX magic number {0:#010x}")]
    IdxMagic(u32),
    #[error("truncated IDX payload: expected {expected} bytes, found {found}")]
    IdxTruncated { expected: usize, found: usize },
    #[error("IDX payload has {0} trailing bytes after the declared tensor")]
    IdxTrailing(usize),
    #[error("IDX dimensions overflow the addressable size")]
    IdxDimensionOverflow,
    #[error("CIFAR-10 batch of {0} bytes is not a whole number of 3073-byte records")]
    CifarRecordSize(usize),
    #[error("image file holds {images} items but label file holds {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("dataset cache: {0}")]
    Cache(String),

    #[error("need at least {needed} examples, got {got}")]
    TooFewExamples { needed: usize, got: usize },
    #[error("class id {0} outside 0..=9")]
    ClassOutOfRange(u8),
    #[error("requested range {start}..{end} exceeds source size {len}")]
    RangeExceeded { start: usize, end: usize, len: usize },
    #[error("noise standard deviation must be non-negative, got {0}")]
    NegativeSigma(f64),
    #[error("index {0} is not part of the dataset")]
    UnknownIndex(usize),

    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("layer {layer} out of range for a network with {hidden} hidden layers")]
    LayerOutOfRange { layer: usize, hidden: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("parameter shapes do not match the model")]
    ShapeMismatch,
    #[error("optimizer state was not initialised for a stateful update rule")]
    UninitializedState,
    #[error("invalid optimizer setting: {0}")]
    Optimizer(String),

    #[error("zero-norm representation cannot be projected onto the unit sphere")]
    ZeroNorm,
    #[error("empty point set")]
    EmptySet,

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("training error {target} never reached (minimum was {minimum})")]
    NotReached { target: f64, minimum: f64 },
    #[error("trajectory has too few usable records ({0})")]
    ShortTrajectory(usize),

    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("fit did not converge after {restarts} restarts")]
    NoConvergence { restarts: usize },

    #[error("invalid config at `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("no experiment manifests under {}", .0.display())]
    NoManifests(PathBuf),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

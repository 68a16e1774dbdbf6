use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}: malformed header: expected `{expected}`, found `{found}`")]
    MalformedHeader {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("duplicate image_id `{id}` on lines {first_line} and {second_line}")]
    DuplicateId {
        id: String,
        first_line: u64,
        second_line: u64,
    },

    #[error("{path}: manifest has no data rows")]
    EmptyManifest { path: PathBuf },

    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("embedding store: {0}")]
    Embeddings(String),

    #[error("embedding row {row} contains a non-finite value")]
    NonFiniteRow { row: usize },

    #[error("score table: {0}")]
    ScoreTable(String),

    #[error("label map uses index {index} which has no region name")]
    UnknownLabel { index: u8 },

    #[error("label semantics define no `skin` region")]
    NoSkinRegion,

    #[error("skin mask is empty; image is unusable for brightness")]
    EmptyMask,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("histogram is empty")]
    EmptyHistogram,

    #[error("need at least {required} samples, got {actual}")]
    TooFewSamples { required: usize, actual: usize },

    #[error("invalid window geometry: {0}")]
    WindowGeometry(String),

    #[error("zero-norm vector")]
    ZeroNorm,

    #[error("target FMR {target} is unresolvable below one score: need at least {required} scores, got {actual}")]
    TooFewScores { target: f64, required: u64, actual: u64 },

    #[error("target FMR {target} is unresolvable: the top scores are tied, no observed threshold achieves it")]
    UnresolvableThreshold { target: f64 },

    #[error("no record for image `{0}`")]
    UnknownImage(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    Input(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the error signals a bug rather than bad input.
    pub fn is_internal(&self) -> bool {
        matches!(self, Error::Invariant(_))
    }
}

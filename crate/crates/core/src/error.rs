use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },

    #[error("trajectory {id}: timestamp {t} does not increase (previous {prev})")]
    NonIncreasingTimestamp { id: String, prev: f64, t: f64 },

    #[error("trajectory {id} has {len} point(s); at least 2 are required")]
    TrajectoryTooShort { id: String, len: usize },

    #[error("duplicate trajectory id {0}")]
    DuplicateId(String),

    #[error("coordinate out of range: lat {lat}, lon {lon}")]
    OutOfRangeCoordinate { lat: f64, lon: f64 },

    #[error("budget {budget} is below the {min} points needed to keep every endpoint")]
    BudgetTooSmall { budget: usize, min: usize },

    #[error("query workload is empty")]
    EmptyWorkload,

    #[error("only {available} candidate trajectories for k = {k}")]
    InsufficientCandidates { k: usize, available: usize },

    #[error("every level-{level} cube is exhausted")]
    Exhausted { level: usize },

    #[error("cube has no uninserted candidate points")]
    CubeExhausted,

    #[error("trajectory has no candidate points in the cube")]
    NoCandidates,

    #[error("no valid action in mask")]
    NoValidAction,

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("malformed results: {0}")]
    MalformedResults(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("sampler failure: {divergent} of {total} post-warmup transitions diverged")]
    TooManyDivergences { divergent: usize, total: usize },

    #[error("sampler failure: {0}")]
    Sampler(String),

    #[error("model failure: {0}")]
    Model(String),

    #[error("no candidate points left to acquire")]
    CandidatesExhausted,

    #[error("step {step}: {source}")]
    CampaignStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("unknown test function {0:?}")]
    UnknownFunction(String),

    #[error("point {0:?} lies outside the domain")]
    OutOfBounds(Vec<f64>),

    #[error("config error at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("incompatible runs: {0}")]
    IncompatibleRuns(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error comes from the user's configuration rather than
    /// from running a campaign.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_) | Error::Schema { .. } | Error::UnknownFunction(_) | Error::Json(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

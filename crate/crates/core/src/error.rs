use thiserror::Error;

/// Errors raised across the channel-estimation and tracking stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("path with delay {delay:.3e} s falls outside the window [0, {limit:.3e}] s")]
    PathOutOfWindow { delay: f64, limit: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("combiner {0} is rank deficient; W*W has no Cholesky factor")]
    SingularCombiner(usize),

    #[error("dictionary dimension {dim} requests {atoms} atoms, cap is {cap}")]
    ResolutionTooFine { dim: usize, atoms: usize, cap: usize },

    #[error("channel estimate contains no paths")]
    EmptyEstimate,

    #[error("atom index {index:?} outside dictionary sizes {sizes:?}")]
    IndexOutOfRange { index: [usize; 5], sizes: [usize; 5] },

    #[error("measurement batch is empty")]
    EmptyBatch,

    #[error("paths do not satisfy the localizability rule")]
    NotLocalizable,

    #[error("position solver did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("start position ({x:.2}, {y:.2}) is not on any lane")]
    StartOutsideLane { x: f64, y: f64 },

    #[error("dataset export needs {needed} frames of history, have {have}")]
    InsufficientHistory { needed: usize, have: usize },

    #[error("percentile of an empty list")]
    EmptyList,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}

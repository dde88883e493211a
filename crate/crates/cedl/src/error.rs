//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by any operation in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Vector or matrix dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A layer stack or generator specification is invalid.
    #[error("invalid specification: {0}")]
    Spec(String),

    /// Input data contains NaN or infinite entries.
    #[error("non-finite input: {0}")]
    Input(String),

    /// A forward cache does not match the model or batch it is used with.
    #[error("stale or mismatched forward cache: {0}")]
    Cache(String),

    /// Class label outside {0, 1}.
    #[error("label must be 0 or 1, got {0}")]
    Label(u8),

    /// An operation that needs at least one sample received none.
    #[error("empty batch")]
    EmptyBatch,

    /// A split or weighting needs both classes but one is absent.
    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    /// A data file failed to parse.
    #[error("{path}:{line}: {msg}")]
    Format {
        path: String,
        line: usize,
        msg: String,
    },

    /// Not enough data to perform the operation (e.g. series shorter than a window).
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Requested anomaly proportion exceeds what the dataset can supply.
    #[error(
        "cannot reach anomaly proportion {requested}: maximum achievable is {max_achievable}"
    )]
    Capacity {
        requested: f64,
        max_achievable: f64,
    },

    /// Parameter/gradient/statistic shapes do not match.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A gradient contains NaN or infinite entries.
    #[error("non-finite gradient: {0}")]
    Gradient(String),

    /// Training produced a non-finite loss.
    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },

    /// A metric is undefined for the given label distribution.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// An experiment protocol precondition failed.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// A checkpoint file has a bad magic string or unknown version.
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    /// A checkpoint file is truncated or otherwise inconsistent.
    #[error("checkpoint integrity: {0}")]
    Integrity(String),

    /// A user-supplied function evaluated to a non-finite value.
    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// An experiment configuration is invalid.
    #[error("config error: {0}")]
    Config(String),

    /// Error wrapped with the id of the experiment that produced it.
    #[error("experiment '{id}': {source}")]
    Experiment {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wrap an error with the experiment id it occurred in.
    pub fn in_experiment(self, id: &str) -> Error {
        Error::Experiment {
            id: id.to_string(),
            source: Box::new(self),
        }
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    /// Draft-limit reasoning below is only exact for unit customer demands.
    #[error("node {node} has demand {demand}; only unit customer demands (and zero depot demand) are supported")]
    NonUnitDemand { node: usize, demand: u32 },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("node {0} is already visited")]
    Revisit(usize),

    #[error("node {0} is out of range")]
    NodeOutOfRange(usize),

    #[error("{0} node(s) remain unvisited")]
    Incomplete(usize),

    #[error("constraint violated at node {node} (excess {excess})")]
    Violation { node: usize, excess: f64 },

    #[error("invalid tour: {0}")]
    InvalidTour(String),

    #[error("Lagrangian multiplier must be nonnegative, got {0}")]
    NegativeMultiplier(f64),

    #[error("lookahead depth {0} is not supported (0, 1 or 2)")]
    UnsupportedDepth(usize),

    #[error("{what} limited to {limit}, got {size}")]
    TooLarge {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    #[error("no selectable node")]
    EmptyMask,

    #[error("variant mismatch: {0}")]
    VariantMismatch(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("class weights undefined: no samples")]
    NoSamples,

    #[error("no reference length for instance {0}")]
    MissingReference(usize),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

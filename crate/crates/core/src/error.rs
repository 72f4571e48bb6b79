use std::path::PathBuf;

use crate::hin::{NodeType, Relation};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("relation {rel} joins {expected_from} and {expected_to}, got {got_from} and {got_to}")]
    TypeMismatch {
        rel: Relation,
        expected_from: NodeType,
        expected_to: NodeType,
        got_from: NodeType,
        got_to: NodeType,
    },

    #[error("{kind} node index {index} is not registered")]
    UnknownNode { kind: NodeType, index: u32 },

    #[error("node key must be non-empty")]
    EmptyKey,

    #[error("graph is frozen; no further mutation allowed")]
    Frozen,

    #[error("graph must be frozen before counting")]
    NotFrozen,

    #[error("invalid meta-path: {0}")]
    InvalidPath(String),

    #[error("invalid weight vector: {0}")]
    InvalidWeights(String),

    #[error("no records")]
    NoRecords,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown instance {0}")]
    UnknownInstance(String),

    #[error("distance entry ({row}, {col}) = {value} lies outside [0, 1]")]
    DistanceRange { row: usize, col: usize, value: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {stage} (epoch {epoch}, batch {batch})")]
    Numeric {
        stage: &'static str,
        epoch: usize,
        batch: usize,
    },

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("classification failed: {0}")]
    Classify(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("infeasible synthetic spec: {0}")]
    InfeasibleSpec(String),

    #[error("invalid config: {0}")]
    Config(String),

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
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

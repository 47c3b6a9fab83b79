use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("graph has no edges")]
    EmptyGraph,

    #[error("unknown node ids: {}", .0.join(", "))]
    UnknownNodes(Vec<String>),

    #[error("label file defines {0} classes, need at least 2")]
    TooFewClasses(usize),

    #[error("no feature row for node {0}")]
    MissingFeatures(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("split leaves {train} training and {test} test edges; both must be non-empty")]
    DegenerateSplit { train: usize, test: usize },

    #[error(
        "requested {requested} reversed negatives but only {available} test positives are unidirectional \
         (max mix ratio {max_ratio:.4})"
    )]
    InsufficientUnidirectional {
        requested: usize,
        available: usize,
        max_ratio: f64,
    },

    #[error("cannot draw {requested} distinct non-edges, only {available} exist")]
    InsufficientNonEdges { requested: usize, available: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),

    #[error("loss became non-finite at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("class {0} has no training examples; try another seed")]
    ClassMissingFromTrain(u32),

    #[error("malformed matrix file: {0}")]
    Matrix(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Error::File {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

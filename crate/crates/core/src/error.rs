use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate embedding: zero norm")]
    DegenerateEmbedding,

    #[error("non-finite input at component {0}")]
    NonFinite(usize),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("degenerate centroid: mean norm {0:e} below 1e-6")]
    DegenerateCentroid(f64),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown face `{0}`")]
    UnknownFace(String),

    #[error("duplicate face_id `{0}`")]
    DuplicateFace(String),

    #[error("face `{face_id}`: {reason}")]
    InvalidAttribute { face_id: String, reason: String },

    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },

    #[error("record `{face_id}`: embedding_row {row} out of bounds (rows: {rows})")]
    RowOutOfBounds { face_id: String, row: u64, rows: u64 },

    #[error("embedding file: {0}")]
    EmbeddingFile(String),

    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("pipeline collapsed: iteration {0} retained no faces")]
    PipelineCollapsed(usize),

    #[error("embedder: {0}")]
    Embedder(String),

    #[error("matcher failed on pair ({a}, {b}): {reason}")]
    Matcher { a: String, b: String, reason: String },

    #[error("stage `{stage}` failed: {reason}")]
    Stage { stage: String, reason: String },

    #[error("negative measurement: {0} ms")]
    NegativeMeasurement(f64),

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

    pub(crate) fn in_iteration(self, iteration: usize) -> Self {
        Error::Iteration {
            iteration,
            source: Box::new(self),
        }
    }
}

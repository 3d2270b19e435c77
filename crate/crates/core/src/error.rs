use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record at offset {offset} in {source_name}: {reason}")]
    Malformed {
        source_name: String,
        offset: usize,
        reason: String,
    },

    #[error("unknown label {0:?}")]
    UnknownLabel(String),

    #[error("invalid example {id}: {reason}")]
    InvalidExample { id: String, reason: String },

    #[error("cannot read image {id}: {reason}")]
    Image { id: String, reason: String },

    #[error("face detector failed on image {image_id}: {reason}")]
    Detector { image_id: String, reason: String },

    #[error("face crop {width}x{height} is below the analyzer minimum side {min_side}")]
    CropTooSmall { width: u32, height: u32, min_side: u32 },

    #[error("invalid face attributes: {0}")]
    InvalidAttributes(String),

    #[error("backend error: {0}")]
    Backend(String),

    #[error("unknown backend {name:?}; registered backends: {}", registered.join(", "))]
    UnknownBackend { name: String, registered: Vec<String> },

    #[error("backend {backend:?} requires model assets that were not found: {}", missing.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    MissingAssets { backend: String, missing: Vec<PathBuf> },

    #[error("degenerate embedding: projected vector has zero norm")]
    DegenerateEmbedding,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("target of {target_tokens} tokens does not fit in max_len {max_len}")]
    TargetTooLong { target_tokens: usize, max_len: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid probability vector: {0}")]
    InvalidProbabilities(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss is {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

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

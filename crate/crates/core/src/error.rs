use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("infeasible spec: {0}")]
    InfeasibleSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate camera: {0}")]
    DegenerateCamera(String),

    #[error("malformed manifest: {0}")]
    Manifest(String),

    #[error("malformed image {path}: {reason}")]
    Image { path: PathBuf, reason: String },

    #[error("non-binary mask in {path}: pixel value {value}")]
    NonBinaryMask { path: PathBuf, value: u8 },

    #[error("mask value {value} in {path} is not one of the declared class levels")]
    UndeclaredLevel { path: PathBuf, value: u8 },

    #[error("resolution mismatch: {0}")]
    Resolution(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),

    #[error("stage mismatch: expected {expected}, found {found}")]
    StageMismatch { expected: String, found: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("non-finite gradient at step {step}")]
    NonFiniteGradient { step: usize },

    #[error("sampling bounds mismatch: {0}")]
    BoundsMismatch(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid config: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("missing {what}: {path}")]
    Missing { what: String, path: PathBuf },

    #[error("ply error: {0}")]
    Ply(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

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

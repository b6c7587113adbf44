use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient data: need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("missing manifest in {0}")]
    MissingManifest(PathBuf),

    #[error("payload mismatch in {file}: expected {expected} bytes, found {found}")]
    PayloadMismatch {
        file: String,
        expected: u64,
        found: u64,
    },

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: String, index: usize },

    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("index {index} out of range 0..{len}")]
    Index { index: usize, len: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("training diverged at epoch {epoch}, step {step} (loss = {loss})")]
    Diverged { epoch: usize, step: usize, loss: f64 },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("undefined reference: {0}")]
    UndefinedReference(String),

    #[error("undefined similarity: {0}")]
    UndefinedSimilarity(String),

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error("checkpoint/config mismatch in fields: {}", .0.join(", "))]
    ConfigMismatch(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

use std::path::PathBuf;

/// Errors produced by the taperlab pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid length: {0}")]
    InvalidLength(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate taper bank: {0}")]
    DegenerateTaper(String),

    #[error("constraint violation: {0}")]
    Constraint(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("invalid center: {0}")]
    InvalidCenter(String),

    #[error("stale forward cache: {0}")]
    StaleCache(String),

    #[error("training diverged at epoch {epoch}, step {step}: {detail}")]
    Diverged {
        epoch: usize,
        step: usize,
        detail: String,
    },

    #[error("unsupported audio in {path}: {detail}")]
    UnsupportedAudio { path: PathBuf, detail: String },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

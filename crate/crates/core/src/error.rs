use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("sample index {index} out of range for {len} samples")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid label {label} at sample {index}: expected -1 or +1")]
    InvalidLabel { index: usize, label: f64 },

    #[error("matrix is not symmetric positive definite")]
    NotSpd,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate input: {0}")]
    Degenerate(&'static str),

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("configuration errors:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid edge ({i}, {j}): {msg}")]
    InvalidEdge { i: usize, j: usize, msg: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid parameter `{name}`: {msg}")]
    InvalidParameter { name: &'static str, msg: String },

    #[error("matrix is not symmetric (relative Frobenius asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("eigendecomposition failed: {0}")]
    Decomposition(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("window {index} violates the norm constraint: |w|^2 = {norm_sq}, expected {expected}")]
    WindowNorm {
        index: usize,
        norm_sq: f64,
        expected: f64,
    },

    #[error("unknown kernel `{0}`")]
    UnknownKernel(String),

    #[error("kernel `{name}` is not finite at lambda = {lambda}")]
    NonFiniteKernel { name: String, lambda: f64 },

    #[error("frequency grids differ")]
    GridMismatch,

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, msg: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        msg: msg.into(),
    }
}

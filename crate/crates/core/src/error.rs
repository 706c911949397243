use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("pair transform is singular (det = {det})")]
    SingularTransform { det: f64 },

    #[error("block [{offset}, {offset}+{length}) out of range for vector of length {len}")]
    BlockOutOfRange {
        offset: usize,
        length: usize,
        len: usize,
    },

    #[error("invalid block layout: {0}")]
    Layout(String),

    #[error("matrix is not skew-symmetric: S[{row}][{col}] + S[{col}][{row}] = {sum:e}")]
    NotSkew { row: usize, col: usize, sum: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("algebraic loop through source block at offset {offset} is singular")]
    SingularLoop { offset: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("iteration diverged at step {iter}")]
    Diverged { iter: u64 },

    #[error("reference point is not a fixed point (residual {residual:e})")]
    NotFixedPoint { residual: f64 },

    #[error("reference solver did not converge: {0}")]
    Oracle(String),

    #[error("no reference solver: {0}")]
    NoOracle(String),

    #[error("graph is not connected")]
    Disconnected,
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

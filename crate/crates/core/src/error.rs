//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("grid resolution mismatch: {a} vs {b}")]
    ResolutionMismatch { a: usize, b: usize },

    #[error("channel mismatch: expected {expected}, got {actual}")]
    ChannelMismatch { expected: usize, actual: usize },

    #[error("no iso-surface crossing: extracted mesh is empty")]
    EmptyMesh,

    #[error("vertex {0} has no neighbors")]
    IsolatedVertex(usize),

    #[error("mesh has zero total surface area")]
    ZeroArea,

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("mesh is not watertight: parity disagrees on {mismatched} of {total} cells")]
    NonWatertight { mismatched: usize, total: usize },

    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: usize, detail: String },

    #[error("bad magic: expected {expected:?}, got {actual:?}")]
    BadMagic { expected: String, actual: String },

    #[error("truncated payload: expected {expected} bytes, got {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("occupancy value {value} out of [0,1] at cell {index}")]
    ValueOutOfRange { index: usize, value: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

//! Minimal dense tensor library with reverse-mode automatic differentiation.
//!
//! Everything the model needs and nothing more: 1-D/2-D tensors, a recording
//! tape with per-op backward rules, masked softmax/attention primitives, an
//! Adam optimizer, finite-difference gradient checking, and a byte-stable
//! checkpoint format. Computation is generic over [`Scalar`] so the same code
//! runs in double precision for verification and single precision for
//! training speed.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod rng;
pub mod scalar;
pub mod tape;
pub mod tensor;

pub use adam::{clip_global_norm, AdamConfig, AdamState};
pub use scalar::Scalar;
pub use tape::{GradAccumulator, NodeId, Tape};
pub use tensor::{Param, ParamSet, Tensor};

use thiserror::Error;

/// Errors raised by tensor and tape operations.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },
    #[error("index {index} out of range for table of {len} rows")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("degenerate input in {op}: {detail}")]
    DegenerateInput { op: &'static str, detail: String },
    #[error("state error: {0}")]
    State(String),
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TensorError>;

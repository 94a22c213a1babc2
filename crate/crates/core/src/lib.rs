//! NRNF: a news recommender that models implicit negative feedback.
//!
//! Clicked news are split by reading dwell time into positive and negative
//! views, each view is encoded by a Transformer plus additive attention, and
//! candidate news are scored against both user embeddings with learnable
//! weights. News themselves are encoded from title and body with interactive
//! cross-attention. This crate holds the data pipeline, a synthetic corpus
//! generator with planted ground truth, the model, the trainer, ranking
//! metrics, and the ablation/report harness.

pub mod ablate;
pub mod config;
pub mod eval;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod records;
pub mod synth;
pub mod trainer;
pub mod vocab;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("data error: {0}")]
    Data(String),
    #[error("size error: {0}")]
    Size(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error(transparent)]
    Tensor(#[from] nrnf_tensor::TensorError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;

//! Minimal dense-matrix numerics: tensors, a reverse-mode tape, an Adam
//! parameter store with checkpointing, and small network building blocks.

pub mod graph;
pub mod nn;
pub mod store;
pub mod tensor;

pub use graph::{softmax_rows_value, Graph, NodeId};
pub use nn::{BatchNorm, Linear, Mlp, OutputActivation};
pub use store::{ParamId, ParamStore};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NumError {
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

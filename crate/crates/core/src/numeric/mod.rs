//! Dense double-precision tensors, a recorded computation graph with
//! reverse-mode gradients, Adam, dropout and finite-difference checking.

mod checkpoint;
mod gradcheck;
mod graph;
mod params;
mod rng;
mod tensor;

pub use checkpoint::{decode as decode_checkpoint, encode as encode_checkpoint, load_into, restore, save};
pub use gradcheck::grad_check;
pub use graph::{sigmoid, Gradients, Graph, Var};
pub use params::{Adam, ParamId, ParamStore, Parameter};
pub use rng::RngStream;
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NumericError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("loss must be a single value, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("{0}")]
    InvalidArgument(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

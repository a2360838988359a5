//! Small dense-tensor engine: reverse-mode tape, named parameters, Adam with
//! decoupled weight decay, and a binary checkpoint format.

mod adam;
mod checkpoint;
mod store;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig};
pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint,
    CheckpointError, CHECKPOINT_VERSION,
};
pub use store::ParameterStore;
pub use tape::{Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: [usize; 2],
        right: [usize; 2],
    },
    #[error("{len} values cannot fill shape {shape:?}")]
    BadLength { shape: [usize; 2], len: usize },
    #[error("index {index} out of range {len} in {op}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("backward requires a scalar, got shape {0:?}")]
    NotScalar([usize; 2]),
    #[error("{0} needs at least one operand")]
    Empty(&'static str),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
}

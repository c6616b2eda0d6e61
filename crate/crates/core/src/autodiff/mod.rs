//! Minimal dense reverse-mode automatic differentiation.
//!
//! Values are row-major 2-D [`Tensor`]s. A [`Tape`] records every operation
//! of one forward pass; [`Tape::backward`] then walks the record in reverse
//! and accumulates `d loss / d node` for every node that depends on a
//! trainable leaf. Trainable parameters live in a [`ParamStore`] outside the
//! tape and are bound to leaves for each pass.

mod checkpoint;
pub mod gradcheck;
mod nn;
mod optim;
mod tape;
mod tensor;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use nn::{Activation, Mlp, ParamId, ParamStore};
pub use optim::{clip_grad_norm, Adam, AdamConfig};
pub use tape::{gumbel_softmax, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("backward needs a scalar loss, got shape {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
    #[error("temperature must be positive, got {0}")]
    InvalidTemperature(f64),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

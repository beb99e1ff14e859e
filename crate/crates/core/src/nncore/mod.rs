//! Neural-network substrate: f64 tensors, a dozen layer kinds with
//! reverse-mode gradients, Adam, finite-difference gradient checking,
//! and checkpoint serialization. Deliberately minimal; just enough for
//! a text CNN over length-3000 code sequences and a conditional GAN
//! over 28x28 grids.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod layer;
pub mod loss;
pub mod tensor;

pub use adam::{adam_update, Adam, AdamConfig};
pub use checkpoint::{
    append_state, layer_from_spec, model_from_spec, model_spec, read_checkpoint, read_state,
    write_checkpoint, LayerSpec,
};
pub use gradcheck::{finite_diff_check, finite_diff_check_biased, finite_diff_check_fn};
pub use layer::{Cache, Layer, Mode, Model};
pub use loss::{bce_from_probs, mean_log_prob, softmax_cross_entropy, LOG_EPS};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("{layer}: expected {expected}, got shape {got:?}")]
    Shape { layer: &'static str, expected: String, got: Vec<usize> },
    #[error("embedding index {index} outside vocabulary of {vocab}")]
    BadIndex { index: f64, vocab: usize },
    #[error("{0}: backward called without a matching forward cache")]
    MissingCache(&'static str),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

//! Small differentiable kernels with hand-written backward passes.
//!
//! Layers hold [`ParamId`]s into a [`ParamSet`]; forward passes return a cache
//! and backward passes accumulate into a gradient set with the same layout.

mod adam;
mod checkpoint;
mod gradcheck;
mod kernel;
mod layers;
mod params;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, grad_check_with, max_relative_error, GradCheckReport, TensorError, FD_STEP};
pub use kernel::{evaluate, Backward, Cotangents, KernelSpec};
pub use layers::{
    laplace_nll, laplace_nll_grad, logistic, softmax, softmax_backward, softplus, Affine, Attention, AttentionCache,
    Gru, GruCache, Mlp, MlpCache,
};
pub use params::{Init, ParamId, ParamSet};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

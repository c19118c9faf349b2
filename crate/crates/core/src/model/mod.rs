//! Forecasting network: recurrent history encoder, modal-query interactor,
//! attribute branches with gated fusion, and a recurrent Laplace-mixture
//! decoder. Every forward pass has a matching hand-written backward pass.
//!
//! All computation happens in a target-local frame: origin at the target's
//! last observed position, x axis along its last observed heading, lengths
//! divided by [`ModelConfig::position_scale`].

mod input;
mod net;

pub use input::{Frame, ModelInput, ACCEL_GAIN, STEP_FEATURES};
pub use net::{
    BranchCache, DisentangledFeatures, ForwardCache, ForwardOutput, LocalPrediction, Model, OutputGrads,
    SceneEncoding,
};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Feature width `D`.
    pub embed_dim: usize,
    /// Number of modes `K`.
    pub num_modes: usize,
    pub num_heads: usize,
    /// Nearest neighbors encoded per scene.
    pub max_neighbors: usize,
    /// Zero-valued map tokens appended to the interactor's key set.
    pub map_tokens: usize,
    /// Meters per model unit.
    pub position_scale: f64,
    /// Added to every predicted scale, meters.
    pub min_scale: f64,
    /// Hidden width of the attribute, gate and output perceptrons; 0 means `D`.
    pub head_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 32,
            num_modes: 25,
            num_heads: 4,
            max_neighbors: 8,
            map_tokens: 0,
            position_scale: 5.0,
            min_scale: 0.01,
            head_hidden: 0,
        }
    }
}

impl ModelConfig {
    /// `D = 8`, `K = 3`, two heads.
    pub fn micro() -> Self {
        Self {
            embed_dim: 8,
            num_modes: 3,
            num_heads: 2,
            ..Self::default()
        }
    }

    pub fn hidden(&self) -> usize {
        if self.head_hidden == 0 {
            self.embed_dim
        } else {
            self.head_hidden
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: &str| Err(ModelError::InvalidConfig(m.into()));
        if self.embed_dim == 0 || self.num_modes == 0 || self.num_heads == 0 {
            return fail("embed_dim, num_modes and num_heads must be positive");
        }
        if self.embed_dim % self.num_heads != 0 {
            return fail("embed_dim must be divisible by num_heads");
        }
        if !(self.position_scale > 0.0) || !(self.min_scale >= 0.0) {
            return fail("position_scale must be positive and min_scale nonnegative");
        }
        Ok(())
    }
}

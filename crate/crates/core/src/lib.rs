//! Long-tail trajectory forecasting toolkit.
//!
//! Modules follow the pipeline order: scene data, long-tail attributes,
//! attribute-guided augmentation, differentiable kernels, the forecasting
//! model, contrastive objectives, training and evaluation.

pub mod geom;
pub mod trajdata;
pub mod prediction;
pub mod attributes;
pub mod augment;
pub mod model;
pub mod nn;
pub mod contrastive;
pub mod trainer;
pub mod eval;

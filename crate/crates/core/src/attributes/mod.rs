//! Long-tail attributes per scene: prediction error against a reference
//! predictor, collision risk as the peak inverse time-to-collision, and state
//! complexity from peak jerk and yaw rate. Also Top-k% stratification and
//! subset overlap.

mod baseline;
mod complexity;
mod risk;
mod strata;

pub use baseline::{baseline_predict, compute_prediction_error, KinematicBaselineConfig};
pub use complexity::{compute_state_complexity, state_complexity_terms};
pub use risk::{compute_collision_risk, inv_ttc, RiskConfig, RiskWindow};
pub use strata::{jaccard_overlap, stratify_topk, StratificationResult, TopSubset};

use crate::trajdata::Scene;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AttributeError {
    #[error("mode {mode} has {got} steps, expected {expected}")]
    LengthMismatch { mode: usize, got: usize, expected: usize },
    #[error("scene {scene_id}: agent {agent_id} coincides with the target at t={t}")]
    CoincidentAgents { scene_id: String, agent_id: String, t: f64 },
    #[error("track {agent_id} has {len} states; at least 4 are needed")]
    TrackTooShort { agent_id: String, len: usize },
    #[error("no values to stratify")]
    EmptyInput,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// The three long-tail attributes of one scene. All components are
/// nonnegative and finite.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AttributeVector {
    /// Minimum final displacement error of the reference predictor, meters.
    pub y_e: f64,
    /// Peak inverse time-to-collision, 1/s.
    pub y_r: f64,
    /// Weighted peak jerk plus peak yaw rate.
    pub y_s: f64,
}

impl AttributeVector {
    pub fn as_array(&self) -> [f64; 3] {
        [self.y_e, self.y_r, self.y_s]
    }

    pub fn is_valid(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite() && *v >= 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeConfig {
    pub baseline: KinematicBaselineConfig,
    pub risk: RiskConfig,
    /// Weight on the peak-jerk term.
    pub alpha: f64,
    /// Weight on the peak-yaw-rate term.
    pub beta: f64,
    /// Scale both state-complexity terms to unit variance over the dataset
    /// before weighting.
    pub standardize_terms: bool,
}

impl Default for AttributeConfig {
    fn default() -> Self {
        Self {
            baseline: KinematicBaselineConfig::default(),
            risk: RiskConfig::default(),
            alpha: 1.0,
            beta: 1.0,
            standardize_terms: true,
        }
    }
}

/// Attributes of one scene, with state-complexity terms left unweighted.
fn scene_terms(scene: &Scene, cfg: &AttributeConfig) -> Result<(f64, f64, (f64, f64)), AttributeError> {
    let baseline = baseline_predict(scene, &cfg.baseline);
    let y_e = compute_prediction_error(scene, &baseline)?;
    let y_r = compute_collision_risk(scene, &cfg.risk)?;
    let terms = state_complexity_terms(scene.target())?;
    Ok((y_e, y_r, terms))
}

fn population_std(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    if n == 0.0 {
        return 1.0;
    }
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd > 0.0 && sd.is_finite() {
        sd
    } else {
        1.0
    }
}

/// Computes attributes for every scene, in order. With `standardize_terms`
/// the jerk and yaw-rate terms are divided by their dataset standard
/// deviations before `alpha` and `beta` apply.
pub fn compute_dataset_attributes(
    scenes: &[Scene],
    cfg: &AttributeConfig,
) -> Result<Vec<AttributeVector>, AttributeError> {
    let raw: Vec<(f64, f64, (f64, f64))> = scenes
        .par_iter()
        .map(|s| scene_terms(s, cfg))
        .collect::<Result<_, _>>()?;
    let (jerk_scale, yaw_scale) = if cfg.standardize_terms {
        (
            population_std(raw.iter().map(|r| r.2 .0)),
            population_std(raw.iter().map(|r| r.2 .1)),
        )
    } else {
        (1.0, 1.0)
    };
    Ok(raw
        .into_iter()
        .map(|(y_e, y_r, (jerk, yaw))| AttributeVector {
            y_e,
            y_r,
            y_s: cfg.alpha * jerk / jerk_scale + cfg.beta * yaw / yaw_scale,
        })
        .collect())
}

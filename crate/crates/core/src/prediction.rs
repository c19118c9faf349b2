//! Multimodal trajectory predictions shared by the baseline, the model and the
//! metrics.

use crate::geom::Vec2;

/// `K` trajectory modes over `t_p` steps with per-step Laplace scales and mode
/// probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    /// `K × t_p` locations in meters.
    pub locations: Vec<Vec<Vec2>>,
    /// `K × t_p` per-axis Laplace scales in meters, strictly positive.
    pub scales: Vec<Vec<Vec2>>,
    /// Probability of each mode, summing to 1.
    pub mode_probs: Vec<f64>,
}

impl PredictionSet {
    /// Modes with unit scales and uniform probabilities.
    pub fn uniform(locations: Vec<Vec<Vec2>>) -> Self {
        let k = locations.len();
        let scales = locations
            .iter()
            .map(|m| vec![Vec2::new(1.0, 1.0); m.len()])
            .collect();
        Self {
            locations,
            scales,
            mode_probs: vec![1.0 / k as f64; k],
        }
    }

    pub fn num_modes(&self) -> usize {
        self.locations.len()
    }

    /// Horizon of the first mode.
    pub fn horizon(&self) -> usize {
        self.locations.first().map_or(0, Vec::len)
    }

    /// Keeps only the first `steps` steps of every mode.
    pub fn truncated(&self, steps: usize) -> Self {
        Self {
            locations: self.locations.iter().map(|m| m[..steps.min(m.len())].to_vec()).collect(),
            scales: self.scales.iter().map(|m| m[..steps.min(m.len())].to_vec()).collect(),
            mode_probs: self.mode_probs.clone(),
        }
    }
}

use super::TrainError;
use crate::augment::PolicyBounds;
use crate::contrastive::{AmclConfig, FdclConfig};
use crate::model::ModelConfig;
use crate::nn::AdamConfig;
use serde::{Deserialize, Serialize};

/// How positive views are produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Draw strategy and intensities uniformly instead of from the
    /// attribute-conditioned generator.
    pub random: bool,
    pub generator_hidden: usize,
    pub bounds: PolicyBounds,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            random: false,
            generator_hidden: 16,
            bounds: PolicyBounds::default(),
        }
    }
}

/// Everything `run_training` needs. Loads from TOML; every key is optional
/// and unknown keys are rejected.
///
/// ```toml
/// epochs = 20
/// lambda = [1.0, 1.0, 0.1]
/// model.embed_dim = 8
/// amcl.n_neg = 16
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Epochs before the first clustering round.
    pub warmup_epochs: usize,
    pub cluster_interval: usize,
    pub batch_size: usize,
    /// `(λ_attr, λ_amcl, λ_fdcl)`.
    pub lambda: [f64; 3],
    pub seed: u64,
    /// Number of pseudo-label clusters.
    pub clusters: usize,
    pub kmeans_restarts: usize,
    pub kmeans_max_iters: usize,
    pub momentum_base: f64,
    pub momentum_final: f64,
    pub model: ModelConfig,
    pub adam: AdamConfig,
    pub amcl: AmclConfig,
    pub fdcl: FdclConfig,
    pub augment: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 120,
            warmup_epochs: 10,
            cluster_interval: 5,
            batch_size: 32,
            lambda: [1.0, 1.0, 0.1],
            seed: 7,
            clusters: 5,
            kmeans_restarts: 10,
            kmeans_max_iters: 100,
            momentum_base: 0.95,
            momentum_final: 0.999,
            model: ModelConfig::default(),
            adam: AdamConfig::default(),
            amcl: AmclConfig::default(),
            fdcl: FdclConfig::default(),
            augment: AugmentConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self, TrainError> {
        let cfg: Self = toml::from_str(text).map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// True on the epochs (1-based) whose end triggers clustering. Runs no
    /// longer than the warm-up never cluster.
    pub fn is_cluster_epoch(&self, epoch: usize) -> bool {
        epoch >= self.warmup_epochs && (epoch - self.warmup_epochs) % self.cluster_interval == 0
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: String| Err(TrainError::InvalidConfig(m));
        if self.epochs == 0 {
            return fail("epochs must be positive".into());
        }
        if self.cluster_interval == 0 || self.batch_size == 0 || self.clusters == 0 {
            return fail("cluster_interval, batch_size and clusters must be positive".into());
        }
        if self.lambda.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return fail(format!("lambda must be finite and nonnegative, got {:?}", self.lambda));
        }
        if !(0.0..=1.0).contains(&self.momentum_base) || !(self.momentum_base..=1.0).contains(&self.momentum_final) {
            return fail("need 0 <= momentum_base <= momentum_final <= 1".into());
        }
        let a = &self.amcl;
        if !(a.tau_a > 0.0 && a.tau_w > 0.0) || a.n_neg == 0 || a.queue_size < a.n_neg {
            return fail("amcl needs positive temperatures and n_neg <= queue_size".into());
        }
        let f = &self.fdcl;
        if !(f.tau_f > 0.0) || !(0.0..=1.0).contains(&f.alpha) || !(f.eta >= 0.0) {
            return fail("fdcl needs tau_f > 0, alpha in [0, 1], eta >= 0".into());
        }
        if !(self.adam.lr > 0.0) {
            return fail("adam.lr must be positive".into());
        }
        if self.augment.generator_hidden == 0 {
            return fail("augment.generator_hidden must be positive".into());
        }
        self.model.validate().map_err(|e| TrainError::InvalidConfig(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_keys_and_defaults() {
        let cfg = TrainConfig::from_toml("epochs = 20\nmodel.embed_dim = 8\nmodel.num_heads = 2\namcl.n_neg = 4\n").unwrap();
        assert_eq!(cfg.epochs, 20);
        assert_eq!(cfg.model.embed_dim, 8);
        assert_eq!(cfg.model.num_modes, 25);
        assert_eq!(cfg.amcl.n_neg, 4);
        assert_eq!(cfg.adam.lr, 5e-4);
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = TrainConfig::default();
        assert_eq!(TrainConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(TrainConfig::from_toml("epochz = 3").is_err());
        assert!(TrainConfig::from_toml("epochs = 0").is_err());
        assert!(TrainConfig::from_toml("cluster_interval = 0").is_err());
    }

    #[test]
    fn cluster_schedule() {
        let cfg = TrainConfig {
            epochs: 20,
            ..Default::default()
        };
        let fired: Vec<usize> = (1..=20).filter(|&e| cfg.is_cluster_epoch(e)).collect();
        assert_eq!(fired, vec![10, 15, 20]);
    }
}

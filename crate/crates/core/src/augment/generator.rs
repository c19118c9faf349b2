use super::{AugmentationPolicy, Strategy};
use crate::attributes::AttributeVector;
use crate::nn::{logistic, softmax, Init, Mlp, ParamSet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Legal ranges the generator squashes its intensity outputs into.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyBounds {
    /// Upper bound on the simplification tolerance, meters.
    pub eps_rdp_max: f64,
    /// Upper bound on the shift magnitude, meters.
    pub eps_max: f64,
    pub rho_min: f64,
    pub gamma_min: f64,
}

impl Default for PolicyBounds {
    fn default() -> Self {
        Self {
            eps_rdp_max: 1.0,
            eps_max: 2.0,
            rho_min: 0.2,
            gamma_min: 0.25,
        }
    }
}

/// Two-layer network from the attribute vector to an [`AugmentationPolicy`].
/// Outputs 0..4 are strategy logits, 4..8 the intensity pre-activations for
/// `eps_rdp`, `eps_shift`, `rho` and `gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyGenerator {
    pub params: ParamSet,
    pub mlp: Mlp,
    pub bounds: PolicyBounds,
}

const OUTPUTS: usize = 8;

impl StrategyGenerator {
    pub fn new(hidden: usize, bounds: PolicyBounds, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let mlp = Mlp::new(&mut params, "aug", &[3, hidden, OUTPUTS], Init::Xavier { gain: 1.0 }, &mut rng);
        Self { params, mlp, bounds }
    }

    /// All weights zero: uniform probabilities and mid-range intensities.
    pub fn zeroed(hidden: usize, bounds: PolicyBounds) -> Self {
        let mut g = Self::new(hidden, bounds, 0);
        g.params.fill_zero();
        g
    }

    fn input(attrs: &AttributeVector) -> [f64; 3] {
        attrs.as_array()
    }

    pub fn generate_policy(&self, attrs: &AttributeVector) -> AugmentationPolicy {
        let (out, _) = self.mlp.forward(&self.params, &Self::input(attrs));
        self.squash(&out)
    }

    fn squash(&self, out: &[f64]) -> AugmentationPolicy {
        let b = self.bounds;
        let p = softmax(&out[..4]);
        let probs = [p[0], p[1], p[2], p[3]];
        AugmentationPolicy {
            probs,
            eps_rdp: b.eps_rdp_max * logistic(out[4]),
            eps_shift: b.eps_max * logistic(out[5]),
            eps_max: b.eps_max,
            rho: b.rho_min + (1.0 - b.rho_min) * logistic(out[6]),
            gamma: b.gamma_min + (1.0 - b.gamma_min) * logistic(out[7]),
        }
    }

    /// Score-function step on the strategy logits: moves
    /// `log p(chosen)` along `advantage · lr`. Intensities are untouched.
    pub fn score_update(&mut self, attrs: &AttributeVector, chosen: Strategy, advantage: f64, lr: f64) {
        let (out, cache) = self.mlp.forward(&self.params, &Self::input(attrs));
        let p = softmax(&out[..4]);
        let mut dout = vec![0.0; OUTPUTS];
        for (i, pi) in p.iter().enumerate() {
            let onehot = if i == chosen.index() { 1.0 } else { 0.0 };
            dout[i] = onehot - pi;
        }
        let mut grads = self.params.zeros_like();
        self.mlp.backward(&self.params, &cache, &dout, &mut grads);
        self.params
            .add_scaled(&grads, lr * advantage)
            .expect("gradient set shares the parameter layout");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::{select_strategy, Strategy};
    use proptest::prelude::*;

    #[test]
    fn zero_weights_give_uniform_probs() {
        let g = StrategyGenerator::zeroed(16, PolicyBounds::default());
        let p = g.generate_policy(&AttributeVector { y_e: 3.0, y_r: 1.0, y_s: 0.2 });
        assert_eq!(p.probs, [0.25; 4]);
        assert_eq!(p.eps_shift, 1.0);
        assert!(p.is_valid());
    }

    #[test]
    fn score_update_raises_chosen_probability() {
        let mut g = StrategyGenerator::new(8, PolicyBounds::default(), 5);
        let a = AttributeVector { y_e: 1.0, y_r: 0.5, y_s: 2.0 };
        let before = g.generate_policy(&a).probs[2];
        for _ in 0..50 {
            g.score_update(&a, Strategy::Mask, 1.0, 0.1);
        }
        let after = g.generate_policy(&a);
        assert!(after.probs[2] > before);
        assert_eq!(select_strategy(&after), Strategy::Mask);
    }

    proptest! {
        #[test]
        fn policies_are_always_legal(seed in 0u64..50, e in 0.0f64..50.0, r in 0.0f64..50.0, s in 0.0f64..50.0) {
            let g = StrategyGenerator::new(16, PolicyBounds::default(), seed);
            let p = g.generate_policy(&AttributeVector { y_e: e, y_r: r, y_s: s });
            prop_assert!(p.is_valid());
            prop_assert!((p.probs.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            prop_assert!(p.eps_shift <= p.eps_max);
        }
    }
}

use super::{NnError, ParamSet};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub m: ParamSet,
    pub v: ParamSet,
    pub t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamSet) -> Self {
        Self {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet) -> Result<(), NnError> {
        if !params.same_layout(grads) || !params.same_layout(&self.m) {
            return Err(NnError::ShapeMismatch("optimizer state does not match parameters".into()));
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for id in params.ids().collect::<Vec<_>>() {
            let g = grads.get(id).data();
            let m = self.m.get_mut(id).data_mut();
            for (mi, gi) in m.iter_mut().zip(g) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
            }
            let v = self.v.get_mut(id).data_mut();
            for (vi, gi) in v.iter_mut().zip(g) {
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
            }
            let m = self.m.get(id).data();
            let v = self.v.get(id).data();
            for ((p, mi), vi) in params.get_mut(id).data_mut().iter_mut().zip(m).zip(v) {
                *p -= lr * (mi / c1) / ((vi / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut ps = ParamSet::new();
        let id = ps.add("x", Tensor::vector(vec![1.0, -1.0, 0.0]));
        let mut g = ps.zeros_like();
        g.get_mut(id).data_mut().copy_from_slice(&[3.0, -0.2, 0.0]);
        let mut opt = Adam::new(AdamConfig { lr: 0.1, ..Default::default() }, &ps);
        opt.step(&mut ps, &g).unwrap();
        let d = ps.get(id).data();
        assert!((d[0] - 0.9).abs() < 1e-6);
        assert!((d[1] + 0.9).abs() < 1e-6);
        assert_eq!(d[2], 0.0);
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut ps = ParamSet::new();
        let id = ps.add("x", Tensor::vector(vec![5.0, -3.0]));
        let mut opt = Adam::new(AdamConfig { lr: 0.05, ..Default::default() }, &ps);
        for _ in 0..2000 {
            let mut g = ps.zeros_like();
            let x = ps.get(id).data().to_vec();
            g.get_mut(id).data_mut().copy_from_slice(&[2.0 * (x[0] - 1.0), 2.0 * (x[1] + 2.0)]);
            opt.step(&mut ps, &g).unwrap();
        }
        let x = ps.get(id).data();
        assert!((x[0] - 1.0).abs() < 1e-3 && (x[1] + 2.0).abs() < 1e-3);
    }
}

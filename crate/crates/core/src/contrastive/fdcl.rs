use super::{dot, ContrastiveError};
use crate::nn::softmax;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FdclConfig {
    /// Share of the weight budget given to the augmented view.
    pub alpha: f64,
    /// Focusing exponent on `1 − similarity`.
    pub eta: f64,
    pub tau_f: f64,
}

impl Default for FdclConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            eta: 2.0,
            tau_f: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdclOutput {
    pub loss: f64,
    /// Weights of `[q⁺, P_1, ..]`, treated as constants.
    pub weights: Vec<f64>,
    pub d_q: Vec<f64>,
    pub d_q_plus: Vec<f64>,
    pub d_positives: Vec<Vec<f64>>,
    pub d_negatives: Vec<Vec<f64>>,
}

/// Focused weights for the targets `[q⁺, P_1, .., P_n]`.
///
/// The augmented view gets `α(n+1)`, each cluster member `(1−α)(n+1)/n`,
/// and every weight is scaled by `(1 − ⟨q, target⟩)^η`.
pub fn fdcl_weights(q: &[f64], q_plus: &[f64], positives: &[&[f64]], cfg: &FdclConfig) -> Vec<f64> {
    let n = positives.len() as f64;
    let focus = |t: &[f64]| (1.0 - dot(q, t)).max(0.0).powf(cfg.eta);
    let mut w = vec![cfg.alpha * (n + 1.0) * focus(q_plus)];
    for p in positives {
        w.push((1.0 - cfg.alpha) * (n + 1.0) / n * focus(p));
    }
    w
}

/// Loss with the weights computed from the current features (and then held
/// fixed for the gradient).
pub fn fdcl_loss(
    q: &[f64],
    q_plus: &[f64],
    positives: &[&[f64]],
    negatives: &[&[f64]],
    cfg: &FdclConfig,
) -> Result<FdclOutput, ContrastiveError> {
    let w = fdcl_weights(q, q_plus, positives, cfg);
    fdcl_loss_with_weights(q, q_plus, positives, negatives, &w, cfg.tau_f)
}

/// `1/(n+1) Σ_t [−w_t s_t/τ + log(e^{s_t/τ} + Σ_m e^{s_m/τ})]` over the
/// targets `t ∈ {q⁺} ∪ P`.
pub fn fdcl_loss_with_weights(
    q: &[f64],
    q_plus: &[f64],
    positives: &[&[f64]],
    negatives: &[&[f64]],
    weights: &[f64],
    tau_f: f64,
) -> Result<FdclOutput, ContrastiveError> {
    if negatives.is_empty() {
        return Err(ContrastiveError::EmptyNegatives);
    }
    if weights.len() != positives.len() + 1 {
        return Err(ContrastiveError::ShapeMismatch(format!(
            "{} weights for {} targets",
            weights.len(),
            positives.len() + 1
        )));
    }
    let d = q.len();
    let targets: Vec<&[f64]> = std::iter::once(q_plus).chain(positives.iter().copied()).collect();
    let count = targets.len() as f64;
    let s_neg: Vec<f64> = negatives.iter().map(|n| dot(q, n) / tau_f).collect();

    let mut loss = 0.0;
    let mut d_q = vec![0.0; d];
    let mut d_targets = vec![vec![0.0; d]; targets.len()];
    let mut d_negatives = vec![vec![0.0; d]; negatives.len()];
    for (ti, t) in targets.iter().enumerate() {
        let s_t = dot(q, t) / tau_f;
        let mut logits = Vec::with_capacity(s_neg.len() + 1);
        logits.push(s_t);
        logits.extend_from_slice(&s_neg);
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
        loss += (-weights[ti] * s_t + lse) / count;
        let p = softmax(&logits);
        // dℓ/ds on the raw similarities, already divided by τ and the count.
        let g_t = (p[0] - weights[ti]) / tau_f / count;
        for k in 0..d {
            d_q[k] += g_t * t[k];
            d_targets[ti][k] += g_t * q[k];
        }
        for (mi, n) in negatives.iter().enumerate() {
            let g_m = p[mi + 1] / tau_f / count;
            for k in 0..d {
                d_q[k] += g_m * n[k];
                d_negatives[mi][k] += g_m * q[k];
            }
        }
    }
    let d_q_plus = d_targets.remove(0);
    Ok(FdclOutput {
        loss,
        weights: weights.to_vec(),
        d_q,
        d_q_plus,
        d_positives: d_targets,
        d_negatives,
    })
}

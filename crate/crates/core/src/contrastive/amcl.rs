use super::{dot, ContrastiveError, NegativeQueue};
use crate::nn::softmax;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmclConfig {
    /// Loss temperature.
    pub tau_a: f64,
    /// Temperature of the hard-negative weights.
    pub tau_w: f64,
    /// Hard negatives per query.
    pub n_neg: usize,
    /// Queue capacity.
    pub queue_size: usize,
}

impl Default for AmclConfig {
    fn default() -> Self {
        Self {
            tau_a: 0.07,
            tau_w: 0.1,
            n_neg: 16,
            queue_size: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmclOutcome {
    pub loss: f64,
    pub grad_q: Vec<f64>,
    /// Queue positions of the selected negatives, most similar first.
    pub selected: Vec<usize>,
    pub weights: Vec<f64>,
    pub s_pos: f64,
    pub s_neg: Vec<f64>,
}

/// Indices and similarities of the `n_neg` queue entries most similar to
/// `q`, most similar first; ties go to the older entry.
pub fn select_hard_negatives(q: &[f64], queue: &NegativeQueue, n_neg: usize) -> Result<(Vec<usize>, Vec<f64>), ContrastiveError> {
    if n_neg == 0 || queue.len() < n_neg {
        return Err(ContrastiveError::QueueTooSmall {
            len: queue.len(),
            needed: n_neg.max(1),
        });
    }
    let mut sims: Vec<(usize, f64)> = queue.iter().enumerate().map(|(i, k)| (i, dot(q, k))).collect();
    sims.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    sims.truncate(n_neg);
    Ok(sims.into_iter().unzip())
}

/// `−log(e^{s⁺/τ} / (e^{s⁺/τ} + Σ w_i e^{s_i/τ}))` with fixed weights, and
/// its gradient with respect to `q`.
pub fn amcl_loss(q: &[f64], k_plus: &[f64], negatives: &[&[f64]], weights: &[f64], tau_a: f64) -> (f64, Vec<f64>) {
    let s_pos = dot(q, k_plus);
    let mut logits = Vec::with_capacity(negatives.len() + 1);
    logits.push(s_pos / tau_a);
    for (n, w) in negatives.iter().zip(weights) {
        logits.push(dot(q, n) / tau_a + w.ln());
    }
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    let loss = lse - logits[0];
    let p = softmax(&logits);
    let mut grad: Vec<f64> = k_plus.iter().map(|k| (p[0] - 1.0) / tau_a * k).collect();
    for (n, pi) in negatives.iter().zip(&p[1..]) {
        for (g, x) in grad.iter_mut().zip(n.iter()) {
            *g += pi / tau_a * x;
        }
    }
    (loss, grad)
}

/// Selects hard negatives from the queue, weights them by
/// `softmax(s_i / τ_w)`, evaluates the loss, then appends `k_plus`.
pub fn amcl_step(q: &[f64], k_plus: &[f64], queue: &mut NegativeQueue, cfg: &AmclConfig) -> Result<AmclOutcome, ContrastiveError> {
    if q.len() != k_plus.len() {
        return Err(ContrastiveError::ShapeMismatch("query and key widths differ".into()));
    }
    let (selected, s_neg) = select_hard_negatives(q, queue, cfg.n_neg)?;
    let scaled: Vec<f64> = s_neg.iter().map(|s| s / cfg.tau_w).collect();
    let weights = softmax(&scaled);
    let negs: Vec<&[f64]> = selected.iter().map(|&i| queue.get(i).expect("selected index").as_slice()).collect();
    let (loss, grad_q) = amcl_loss(q, k_plus, &negs, &weights, cfg.tau_a);
    queue.push(k_plus.to_vec())?;
    Ok(AmclOutcome {
        loss,
        grad_q,
        selected,
        weights,
        s_pos: dot(q, k_plus),
        s_neg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(a: f64) -> Vec<f64> {
        vec![a.cos(), a.sin()]
    }

    #[test]
    fn single_negative_closed_form() {
        // s⁺ = 0.8 and s⁻ = 0.2 on unit vectors.
        let q = vec![1.0, 0.0];
        let kp = vec![0.8, 0.6];
        let kn = vec![0.2, (1.0f64 - 0.04).sqrt()];
        let (loss, _) = amcl_loss(&q, &kp, &[&kn], &[1.0], 0.5);
        assert!((loss - (1.0 + (-1.2f64).exp()).ln()).abs() < 1e-12);
        assert!((loss - 0.2633).abs() < 5e-5);
    }

    #[test]
    fn equal_similarities_get_equal_weights() {
        let mut queue = NegativeQueue::new(8);
        queue.push(unit(1.0)).unwrap();
        queue.push(unit(-1.0)).unwrap();
        let cfg = AmclConfig {
            n_neg: 2,
            ..Default::default()
        };
        let out = amcl_step(&unit(0.0), &unit(0.1), &mut queue, &cfg).unwrap();
        assert!((out.weights[0] - 0.5).abs() < 1e-12 && (out.weights[1] - 0.5).abs() < 1e-12);
        assert_eq!(queue.len(), 3);
    }

    #[test]
    fn perfect_separation_gives_vanishing_loss() {
        let q = vec![1.0, 0.0];
        let n = vec![-1.0, 0.0];
        let (loss, _) = amcl_loss(&q, &q, &[&n, &n], &[0.5, 0.5], 0.07);
        assert!(loss < 1e-9);
    }

    #[test]
    fn short_queue_rejected() {
        let mut queue = NegativeQueue::new(8);
        queue.push(unit(1.0)).unwrap();
        let cfg = AmclConfig {
            n_neg: 2,
            ..Default::default()
        };
        assert_eq!(
            amcl_step(&unit(0.0), &unit(0.0), &mut queue, &cfg),
            Err(ContrastiveError::QueueTooSmall { len: 1, needed: 2 })
        );
    }

    #[test]
    fn selects_most_similar() {
        let mut queue = NegativeQueue::new(8);
        for a in [3.0, 0.2, 1.5, 0.1] {
            queue.push(unit(a)).unwrap();
        }
        let (idx, _) = select_hard_negatives(&unit(0.0), &queue, 2).unwrap();
        assert_eq!(idx, vec![3, 1]);
    }
}

//! One optimization step's objective, split so the detached quantities
//! (hard negatives, their weights, focusing weights) are computed once and
//! then held fixed. Finite-difference checks reuse a plan across perturbed
//! parameters.

use super::losses::{attr_loss, attr_loss_grad, task_loss_with_grads, LossBreakdown};
use super::TrainError;
use crate::contrastive::{amcl_loss, fdcl_loss_with_weights, fdcl_weights, select_hard_negatives, AmclConfig, FdclConfig, NegativeQueue};
use crate::geom::Vec2;
use crate::model::{ForwardOutput, OutputGrads};
use crate::nn::softmax;

/// Hard negatives and their weights for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct AmclTerm {
    pub negatives: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

/// Batch positions of the same-label and other-label members, and the
/// focusing weights of `[key view, positives..]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FdclTerm {
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchPlan {
    pub amcl: Vec<Option<AmclTerm>>,
    pub fdcl: Vec<Option<FdclTerm>>,
}

/// Per-sample supervision for one batch.
#[derive(Debug, Clone, Copy)]
pub struct SampleTargets<'a> {
    /// Local-frame future, meters.
    pub truth: &'a [Vec2],
    /// Standardized attributes.
    pub attrs: [f64; 3],
    /// Key-encoder feature of the augmented view.
    pub key: &'a [f64],
    pub label: Option<usize>,
}

/// Chooses hard negatives from `queue` for each query and, where labels are
/// present, positives and negatives among the batch. A query whose queue is
/// still shorter than `n_neg`, or whose label has no other-label member in
/// the batch, gets no term.
pub fn plan_batch(
    contrasts: &[Vec<f64>],
    targets: &[SampleTargets],
    queue: &NegativeQueue,
    amcl: &AmclConfig,
    fdcl: &FdclConfig,
) -> BatchPlan {
    let amcl_terms = contrasts
        .iter()
        .map(|q| {
            let (idx, sims) = select_hard_negatives(q, queue, amcl.n_neg).ok()?;
            let scaled: Vec<f64> = sims.iter().map(|s| s / amcl.tau_w).collect();
            Some(AmclTerm {
                negatives: idx.iter().map(|&i| queue.get(i).expect("selected").clone()).collect(),
                weights: softmax(&scaled),
            })
        })
        .collect();
    let fdcl_terms = targets
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let label = t.label?;
            let (mut positives, mut negatives) = (Vec::new(), Vec::new());
            for (j, o) in targets.iter().enumerate() {
                if j == i {
                    continue;
                }
                if o.label == Some(label) {
                    positives.push(j);
                } else if o.label.is_some() {
                    negatives.push(j);
                }
            }
            if negatives.is_empty() {
                return None;
            }
            let pos: Vec<&[f64]> = positives.iter().map(|&j| contrasts[j].as_slice()).collect();
            let weights = fdcl_weights(&contrasts[i], t.key, &pos, fdcl);
            Some(FdclTerm {
                positives,
                negatives,
                weights,
            })
        })
        .collect();
    BatchPlan {
        amcl: amcl_terms,
        fdcl: fdcl_terms,
    }
}

/// Batch-mean losses and the output cotangents of `L_total` for every
/// sample.
pub fn batch_objective(
    outs: &[ForwardOutput],
    targets: &[SampleTargets],
    plan: &BatchPlan,
    lambda: [f64; 3],
    amcl: &AmclConfig,
    fdcl: &FdclConfig,
) -> Result<(LossBreakdown, Vec<OutputGrads>), TrainError> {
    let b = outs.len();
    if targets.len() != b || plan.amcl.len() != b || plan.fdcl.len() != b {
        return Err(TrainError::ShapeMismatch("batch, targets and plan differ in length".into()));
    }
    let inv_b = 1.0 / b as f64;
    let mut grads = Vec::with_capacity(b);
    let (mut l_target, mut l_reg, mut l_cls, mut l_attr, mut l_amcl, mut l_fdcl) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);

    for (out, t) in outs.iter().zip(targets) {
        let p = &out.prediction;
        let (task, tg) = task_loss_with_grads(p, t.truth)?;
        l_target += task.l_target;
        l_reg += task.l_reg;
        l_cls += task.l_cls;
        l_attr += attr_loss(out.features.y_hat, t.attrs);
        let ag = attr_loss_grad(out.features.y_hat, t.attrs);
        let scale = |v: Vec<Vec<Vec2>>| -> Vec<Vec<Vec2>> {
            v.into_iter().map(|m| m.into_iter().map(|g| g * inv_b).collect()).collect()
        };
        grads.push(OutputGrads {
            d_locations: scale(tg.d_locations),
            d_scales: scale(tg.d_scales),
            d_logits: tg.d_logits.iter().map(|g| g * inv_b).collect(),
            d_y_hat: [ag[0] * lambda[0] * inv_b, ag[1] * lambda[0] * inv_b, ag[2] * lambda[0] * inv_b],
            d_contrast: vec![0.0; out.contrast.len()],
        });
    }

    for (i, term) in plan.amcl.iter().enumerate() {
        let Some(term) = term else { continue };
        let negs: Vec<&[f64]> = term.negatives.iter().map(Vec::as_slice).collect();
        let (loss, dq) = amcl_loss(&outs[i].contrast, targets[i].key, &negs, &term.weights, amcl.tau_a);
        l_amcl += loss;
        for (g, d) in grads[i].d_contrast.iter_mut().zip(&dq) {
            *g += lambda[1] * inv_b * d;
        }
    }

    for (i, term) in plan.fdcl.iter().enumerate() {
        let Some(term) = term else { continue };
        let pos: Vec<&[f64]> = term.positives.iter().map(|&j| outs[j].contrast.as_slice()).collect();
        let neg: Vec<&[f64]> = term.negatives.iter().map(|&j| outs[j].contrast.as_slice()).collect();
        let r = fdcl_loss_with_weights(&outs[i].contrast, targets[i].key, &pos, &neg, &term.weights, fdcl.tau_f)
            .map_err(TrainError::Contrastive)?;
        l_fdcl += r.loss;
        let c = lambda[2] * inv_b;
        let mut add = |j: usize, d: &[f64]| {
            for (g, v) in grads[j].d_contrast.iter_mut().zip(d) {
                *g += c * v;
            }
        };
        add(i, &r.d_q);
        for (&j, d) in term.positives.iter().zip(&r.d_positives) {
            add(j, d);
        }
        for (&j, d) in term.negatives.iter().zip(&r.d_negatives) {
            add(j, d);
        }
    }

    let parts = LossBreakdown::assemble(
        l_target * inv_b,
        l_reg * inv_b,
        l_cls * inv_b,
        l_attr * inv_b,
        l_amcl * inv_b,
        l_fdcl * inv_b,
        lambda,
    );
    Ok((parts, grads))
}

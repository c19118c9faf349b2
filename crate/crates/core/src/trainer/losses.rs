use super::TrainError;
use crate::attributes::AttributeVector;
use crate::geom::Vec2;
use crate::model::LocalPrediction;
use crate::nn::{laplace_nll, laplace_nll_grad, softmax};
use crate::prediction::PredictionSet;
use serde::{Deserialize, Serialize};

/// Every loss component of one step. `l_task` and `l_total` are stored, not
/// derived, so the log can be audited against the identities.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_target: f64,
    pub l_reg: f64,
    pub l_cls: f64,
    pub l_task: f64,
    pub l_attr: f64,
    pub l_amcl: f64,
    pub l_fdcl: f64,
    pub l_total: f64,
}

impl LossBreakdown {
    /// Fills `l_task` and `l_total` from the components.
    pub fn assemble(l_target: f64, l_reg: f64, l_cls: f64, l_attr: f64, l_amcl: f64, l_fdcl: f64, lambda: [f64; 3]) -> Self {
        let mut b = Self {
            l_target,
            l_reg,
            l_cls,
            l_task: l_target + l_reg + l_cls,
            l_attr,
            l_amcl,
            l_fdcl,
            l_total: 0.0,
        };
        b.l_total = total_loss(&b, lambda);
        b
    }

    /// Largest violation of the two sum identities.
    pub fn identity_error(&self, lambda: [f64; 3]) -> f64 {
        let task = (self.l_task - (self.l_target + self.l_reg + self.l_cls)).abs();
        let total = (self.l_total - total_loss(self, lambda)).abs();
        task.max(total)
    }

    pub fn is_finite(&self) -> bool {
        [
            self.l_target,
            self.l_reg,
            self.l_cls,
            self.l_task,
            self.l_attr,
            self.l_amcl,
            self.l_fdcl,
            self.l_total,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// `L_task + λ₁ L_attr + λ₂ L_amcl + λ₃ L_fdcl`.
pub fn total_loss(parts: &LossBreakdown, lambda: [f64; 3]) -> f64 {
    parts.l_task + lambda[0] * parts.l_attr + lambda[1] * parts.l_amcl + lambda[2] * parts.l_fdcl
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskLoss {
    pub l_target: f64,
    pub l_reg: f64,
    pub l_cls: f64,
    /// Mode with the smallest final-position error.
    pub best_mode: usize,
}

/// Cotangents of `L_target + L_reg + L_cls` on the decoder outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskGrads {
    pub d_locations: Vec<Vec<Vec2>>,
    pub d_scales: Vec<Vec<Vec2>>,
    pub d_logits: Vec<f64>,
}

/// Lowest-index mode minimizing the final displacement error.
pub fn best_mode(locations: &[Vec<Vec2>], truth: &[Vec2]) -> usize {
    let last = truth[truth.len() - 1];
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, mode) in locations.iter().enumerate() {
        let d = (mode[mode.len() - 1] - last).norm();
        if d < best_d {
            best = k;
            best_d = d;
        }
    }
    best
}

fn check_shapes(locations: &[Vec<Vec2>], scales: &[Vec<Vec2>], probs: usize, truth: &[Vec2]) -> Result<(), TrainError> {
    let t = truth.len();
    let ok = t > 0
        && !locations.is_empty()
        && locations.len() == scales.len()
        && locations.len() == probs
        && locations.iter().chain(scales).all(|m| m.len() == t);
    if ok {
        Ok(())
    } else {
        Err(TrainError::ShapeMismatch(format!(
            "{} modes, {} scale rows, {} probabilities, horizon {}",
            locations.len(),
            scales.len(),
            probs,
            t
        )))
    }
}

fn target_and_reg(mode: &[Vec2], scales: &[Vec2], truth: &[Vec2]) -> (f64, f64) {
    let t = truth.len() as f64;
    let ade = mode.iter().zip(truth).map(|(m, x)| (*m - *x).norm()).sum::<f64>() / t;
    let nll = mode
        .iter()
        .zip(scales)
        .zip(truth)
        .map(|((m, s), x)| laplace_nll(x.x, m.x, s.x) + laplace_nll(x.y, m.y, s.y))
        .sum::<f64>()
        / (2.0 * t);
    (ade, nll)
}

/// Winner-take-all task loss: ADE and Laplace NLL of the best mode plus
/// `−log π` of that mode. All quantities must share one frame.
pub fn task_loss(pred: &PredictionSet, truth: &[Vec2]) -> Result<TaskLoss, TrainError> {
    check_shapes(&pred.locations, &pred.scales, pred.mode_probs.len(), truth)?;
    let k = best_mode(&pred.locations, truth);
    let (l_target, l_reg) = target_and_reg(&pred.locations[k], &pred.scales[k], truth);
    Ok(TaskLoss {
        l_target,
        l_reg,
        l_cls: -pred.mode_probs[k].ln(),
        best_mode: k,
    })
}

/// [`task_loss`] on decoder output, with `L_cls` from the logits, plus the
/// gradient of the summed task loss.
pub fn task_loss_with_grads(pred: &LocalPrediction, truth: &[Vec2]) -> Result<(TaskLoss, TaskGrads), TrainError> {
    check_shapes(&pred.locations, &pred.scales, pred.logits.len(), truth)?;
    let kk = pred.locations.len();
    let k = best_mode(&pred.locations, truth);
    let (l_target, l_reg) = target_and_reg(&pred.locations[k], &pred.scales[k], truth);
    let m = pred.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + pred.logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    let l_cls = lse - pred.logits[k];

    let t = truth.len();
    let mut d_locations = vec![vec![Vec2::ZERO; t]; kk];
    let mut d_scales = vec![vec![Vec2::ZERO; t]; kk];
    let inv_t = 1.0 / t as f64;
    let inv_2t = 0.5 * inv_t;
    for (i, x) in truth.iter().enumerate() {
        let mu = pred.locations[k][i];
        let s = pred.scales[k][i];
        let r = mu - *x;
        let n = r.norm();
        if n > 0.0 {
            d_locations[k][i] += r * (inv_t / n);
        }
        let (_, gmx, gsx) = laplace_nll_grad(x.x, mu.x, s.x);
        let (_, gmy, gsy) = laplace_nll_grad(x.y, mu.y, s.y);
        d_locations[k][i] += Vec2::new(gmx, gmy) * inv_2t;
        d_scales[k][i] = Vec2::new(gsx, gsy) * inv_2t;
    }
    let mut d_logits = softmax(&pred.logits);
    d_logits[k] -= 1.0;
    Ok((
        TaskLoss {
            l_target,
            l_reg,
            l_cls,
            best_mode: k,
        },
        TaskGrads {
            d_locations,
            d_scales,
            d_logits,
        },
    ))
}

/// Squared Euclidean distance between predicted and target standardized
/// attributes.
pub fn attr_loss(y_hat: [f64; 3], target: [f64; 3]) -> f64 {
    y_hat.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Gradient of [`attr_loss`] with respect to `y_hat`.
pub fn attr_loss_grad(y_hat: [f64; 3], target: [f64; 3]) -> [f64; 3] {
    [
        2.0 * (y_hat[0] - target[0]),
        2.0 * (y_hat[1] - target[1]),
        2.0 * (y_hat[2] - target[2]),
    ]
}

/// Per-attribute divisors frozen from the training set. Attributes are only
/// scaled, not centred: the attribute heads end in a softplus, so targets
/// must stay nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributeScaler {
    pub scale: [f64; 3],
}

impl AttributeScaler {
    /// Population standard deviation of each attribute; 1 where degenerate.
    pub fn fit(attrs: &[AttributeVector]) -> Self {
        let n = attrs.len().max(1) as f64;
        let mut scale = [1.0; 3];
        for (j, s) in scale.iter_mut().enumerate() {
            let mean = attrs.iter().map(|a| a.as_array()[j]).sum::<f64>() / n;
            let var = attrs.iter().map(|a| (a.as_array()[j] - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            if sd > 0.0 && sd.is_finite() {
                *s = sd;
            }
        }
        Self { scale }
    }

    pub fn apply(&self, a: &AttributeVector) -> [f64; 3] {
        let v = a.as_array();
        [v[0] / self.scale[0], v[1] / self.scale[1], v[2] / self.scale[2]]
    }
}

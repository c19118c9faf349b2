//! Contrastive objectives and pseudo-labelling: cosine momentum schedule,
//! hard-negative queue loss, k-means pseudo-labels with stability scoring,
//! and the focused decoupled supervised loss.

mod amcl;
mod ari;
mod fdcl;
mod kmeans;

pub use amcl::{amcl_loss, amcl_step, select_hard_negatives, AmclConfig, AmclOutcome};
pub use ari::adjusted_rand_index;
pub use fdcl::{fdcl_loss, fdcl_loss_with_weights, fdcl_weights, FdclConfig, FdclOutput};
pub use kmeans::{kmeans_fit_assign, kmeans_objective, KMeansResult};

use crate::nn::ParamSet;
use std::collections::VecDeque;

/// Tolerance on the unit-norm invariant of queued and banked features.
pub const UNIT_NORM_TOL: f64 = 1e-9;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ContrastiveError {
    #[error("invalid momentum schedule: {0}")]
    InvalidSchedule(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("queue holds {len} entries, {needed} needed")]
    QueueTooSmall { len: usize, needed: usize },
    #[error("cluster count {c} invalid for {n} points")]
    InvalidClusterCount { c: usize, n: usize },
    #[error("labelings differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no negatives to contrast against")]
    EmptyNegatives,
    #[error("feature is not unit length (norm {0})")]
    NotUnitNorm(f64),
}

/// `m_f − (m_f − m_b)(1 + cos(π e / E_max)) / 2`.
pub fn cosine_momentum(epoch: f64, m_b: f64, m_f: f64, e_max: f64) -> Result<f64, ContrastiveError> {
    if m_b > m_f || !(e_max > 0.0) {
        return Err(ContrastiveError::InvalidSchedule(format!(
            "need m_b <= m_f and E_max > 0 (m_b={m_b}, m_f={m_f}, E_max={e_max})"
        )));
    }
    if !(0.0..=e_max).contains(&epoch) {
        return Err(ContrastiveError::InvalidSchedule(format!("epoch {epoch} outside [0, {e_max}]")));
    }
    Ok(m_f - (m_f - m_b) * (1.0 + (std::f64::consts::PI * epoch / e_max).cos()) / 2.0)
}

/// `θ_k ← m θ_k + (1 − m) θ_q`, elementwise.
pub fn momentum_update(key: &mut ParamSet, query: &ParamSet, m: f64) -> Result<(), ContrastiveError> {
    if !key.same_layout(query) {
        return Err(ContrastiveError::ShapeMismatch("key and query parameters differ in layout".into()));
    }
    for (k, q) in key.tensors_mut().iter_mut().zip(query.tensors()) {
        for (a, b) in k.data_mut().iter_mut().zip(q.data()) {
            *a = m * *a + (1.0 - m) * b;
        }
    }
    Ok(())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_unit(v: &[f64]) -> Result<(), ContrastiveError> {
    let n = dot(v, v).sqrt();
    if (n - 1.0).abs() > UNIT_NORM_TOL {
        return Err(ContrastiveError::NotUnitNorm(n));
    }
    Ok(())
}

/// FIFO of unit-length key features with a fixed capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativeQueue {
    entries: VecDeque<Vec<f64>>,
    capacity: usize,
}

impl NegativeQueue {
    pub fn new(capacity: usize) -> Self {
        Self {
            entries: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Appends `key`, evicting the oldest entry past capacity.
    pub fn push(&mut self, key: Vec<f64>) -> Result<(), ContrastiveError> {
        check_unit(&key)?;
        if self.capacity == 0 {
            return Ok(());
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(key);
        Ok(())
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.entries.iter()
    }

    pub fn get(&self, i: usize) -> Option<&Vec<f64>> {
        self.entries.get(i)
    }
}

/// Per-scene features used for clustering, plus the latest pseudo-labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank {
    features: Vec<Option<Vec<f64>>>,
    pub labels: Option<Vec<usize>>,
    /// Epoch of the last clustering round.
    pub epoch: Option<usize>,
}

impl MemoryBank {
    pub fn new(size: usize) -> Self {
        Self {
            features: vec![None; size],
            labels: None,
            epoch: None,
        }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn set(&mut self, index: usize, feature: Vec<f64>) -> Result<(), ContrastiveError> {
        check_unit(&feature)?;
        let slot = self
            .features
            .get_mut(index)
            .ok_or_else(|| ContrastiveError::ShapeMismatch(format!("bank index {index} out of range")))?;
        *slot = Some(feature);
        Ok(())
    }

    pub fn get(&self, index: usize) -> Option<&[f64]> {
        self.features.get(index).and_then(|f| f.as_deref())
    }

    pub fn is_complete(&self) -> bool {
        self.features.iter().all(Option::is_some)
    }

    /// All features in index order; `None` if any slot is empty.
    pub fn features(&self) -> Option<Vec<Vec<f64>>> {
        self.features.iter().cloned().collect()
    }

    pub fn label(&self, index: usize) -> Option<usize> {
        self.labels.as_ref().and_then(|l| l.get(index).copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    #[test]
    fn schedule_endpoints_and_midpoint() {
        assert!((cosine_momentum(0.0, 0.95, 0.999, 120.0).unwrap() - 0.95).abs() <= 1e-12);
        assert!((cosine_momentum(120.0, 0.95, 0.999, 120.0).unwrap() - 0.999).abs() <= 1e-12);
        assert!((cosine_momentum(60.0, 0.95, 0.999, 120.0).unwrap() - 0.9745).abs() <= 1e-12);
        assert!(cosine_momentum(1.0, 0.99, 0.95, 10.0).is_err());
        assert!(cosine_momentum(1.0, 0.9, 0.95, 0.0).is_err());
    }

    fn scalar(v: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.add("x", Tensor::vector(vec![v]));
        p
    }

    #[test]
    fn momentum_update_cases() {
        let q = scalar(0.0);
        let mut k = scalar(2.0);
        momentum_update(&mut k, &q, 0.75).unwrap();
        assert_eq!(k.tensors()[0].data()[0], 1.5);
        let mut k = scalar(2.0);
        momentum_update(&mut k, &q, 1.0).unwrap();
        assert_eq!(k.tensors()[0].data()[0], 2.0);
        momentum_update(&mut k, &q, 0.0).unwrap();
        assert_eq!(k.tensors()[0].data()[0], 0.0);
        let mut other = ParamSet::new();
        other.add("y", Tensor::vector(vec![1.0, 2.0]));
        assert!(momentum_update(&mut other, &q, 0.5).is_err());
    }

    #[test]
    fn queue_is_fifo_with_capacity() {
        let mut q = NegativeQueue::new(3);
        for i in 0..4 {
            let a = i as f64;
            q.push(vec![a.cos(), a.sin()]).unwrap();
        }
        assert_eq!(q.len(), 3);
        assert_eq!(q.get(0).unwrap()[0], 1f64.cos());
        assert!(q.push(vec![2.0, 0.0]).is_err());
    }

    #[test]
    fn bank_tracks_completeness() {
        let mut b = MemoryBank::new(2);
        assert!(!b.is_complete());
        b.set(0, vec![1.0, 0.0]).unwrap();
        b.set(1, vec![0.0, 1.0]).unwrap();
        assert!(b.is_complete());
        assert_eq!(b.features().unwrap().len(), 2);
        assert!(b.set(2, vec![1.0, 0.0]).is_err());
    }
}

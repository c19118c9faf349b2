//! Attribute-guided augmentation of the target's observed trajectory.
//!
//! A small network maps the attribute vector to a policy (strategy
//! probabilities plus intensities); the most probable of four strategies is
//! applied to produce a positive view for contrastive training.

mod generator;

pub use generator::{PolicyBounds, StrategyGenerator};

use crate::geom::Vec2;
use crate::trajdata::{Scene, TrajectorySlice};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Simplify,
    Shift,
    Mask,
    Subset,
}

impl Strategy {
    /// Tie-break order.
    pub const ALL: [Strategy; 4] = [Strategy::Simplify, Strategy::Shift, Strategy::Mask, Strategy::Subset];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Simplify => "simplify",
            Strategy::Shift => "shift",
            Strategy::Mask => "mask",
            Strategy::Subset => "subset",
        }
    }
}

/// Strategy probabilities and per-strategy intensities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationPolicy {
    /// Over `[Simplify, Shift, Mask, Subset]`.
    pub probs: [f64; 4],
    /// Simplification tolerance, meters.
    pub eps_rdp: f64,
    /// Shift magnitude, meters; at most `eps_max`.
    pub eps_shift: f64,
    pub eps_max: f64,
    /// Point retention probability for masking.
    pub rho: f64,
    /// Fraction of the window kept by subsetting.
    pub gamma: f64,
}

impl AugmentationPolicy {
    /// Probability one on `strategy`, with the given intensities.
    pub fn forcing(strategy: Strategy, eps_rdp: f64, eps_shift: f64, eps_max: f64, rho: f64, gamma: f64) -> Self {
        let mut probs = [0.0; 4];
        probs[strategy.index()] = 1.0;
        Self {
            probs,
            eps_rdp,
            eps_shift,
            eps_max,
            rho,
            gamma,
        }
    }

    pub fn is_valid(&self) -> bool {
        let sum: f64 = self.probs.iter().sum();
        self.probs.iter().all(|p| p.is_finite() && *p >= 0.0)
            && (sum - 1.0).abs() <= 1e-9
            && self.eps_rdp.is_finite()
            && self.eps_rdp >= 0.0
            && self.eps_shift >= 0.0
            && self.eps_shift <= self.eps_max
            && (0.0..=1.0).contains(&self.rho)
            && self.gamma > 0.0
            && self.gamma <= 1.0
    }
}

/// An augmented observation of the target.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedView {
    pub slice: TrajectorySlice,
    pub strategy: Strategy,
    /// The intensity the strategy ran with: `eps_rdp`, the effective shift
    /// bound, `rho` or `gamma`.
    pub intensity: f64,
}

/// Most probable strategy; ties go to the earlier entry of [`Strategy::ALL`].
pub fn select_strategy(policy: &AugmentationPolicy) -> Strategy {
    let mut best = 0;
    for i in 1..4 {
        if policy.probs[i] > policy.probs[best] {
            best = i;
        }
    }
    Strategy::ALL[best]
}

fn perpendicular_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len = ab.norm();
    if len == 0.0 {
        return (p - a).norm();
    }
    let ap = p - a;
    (ab.x * ap.y - ab.y * ap.x).abs() / len
}

fn rdp_keep(points: &[Vec2], lo: usize, hi: usize, eps: f64, keep: &mut [bool]) {
    if hi <= lo + 1 {
        return;
    }
    let (mut far, mut dmax) = (lo, -1.0);
    for i in lo + 1..hi {
        let d = perpendicular_distance(points[i], points[lo], points[hi]);
        if d > dmax {
            dmax = d;
            far = i;
        }
    }
    if dmax > eps {
        keep[far] = true;
        rdp_keep(points, lo, far, eps, keep);
        rdp_keep(points, far, hi, eps, keep);
    }
}

/// Ramer-Douglas-Peucker over the valid points, then piecewise-linear
/// resampling at every original step so the length is unchanged. The validity
/// mask is preserved; `eps <= 0` returns the input.
pub fn rdp_simplify(slice: &TrajectorySlice, eps: f64) -> AugmentedView {
    let view = |slice| AugmentedView {
        slice,
        strategy: Strategy::Simplify,
        intensity: eps,
    };
    let idx: Vec<usize> = (0..slice.len()).filter(|&i| slice.valid[i]).collect();
    if eps <= 0.0 || idx.len() < 3 {
        return view(slice.clone());
    }
    let pts: Vec<Vec2> = idx.iter().map(|&i| slice.positions[i]).collect();
    let mut keep = vec![false; pts.len()];
    keep[0] = true;
    keep[pts.len() - 1] = true;
    rdp_keep(&pts, 0, pts.len() - 1, eps, &mut keep);
    let anchors: Vec<usize> = (0..pts.len()).filter(|&k| keep[k]).map(|k| idx[k]).collect();

    let mut out = slice.clone();
    for w in anchors.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (pa, pb) = (slice.positions[a], slice.positions[b]);
        for i in a + 1..b {
            if slice.valid[i] {
                let f = (i - a) as f64 / (b - a) as f64;
                out.positions[i] = pa + (pb - pa) * f;
            }
        }
    }
    view(out)
}

/// Adds one offset, uniform per component on `±min(eps_shift, eps_max)`, to
/// every valid point.
pub fn shift(slice: &TrajectorySlice, eps_shift: f64, eps_max: f64, rng: &mut impl Rng) -> AugmentedView {
    let e = eps_shift.min(eps_max).max(0.0);
    let delta = if e > 0.0 {
        Vec2::new(rng.gen_range(-e..=e), rng.gen_range(-e..=e))
    } else {
        Vec2::ZERO
    };
    let mut out = slice.clone();
    for (p, v) in out.positions.iter_mut().zip(&slice.valid) {
        if *v {
            *p += delta;
        }
    }
    AugmentedView {
        slice: out,
        strategy: Strategy::Shift,
        intensity: e,
    }
}

/// Keeps each point independently with probability `rho`; dropped points are
/// zeroed and flagged invalid.
pub fn mask(slice: &TrajectorySlice, rho: f64, rng: &mut impl Rng) -> AugmentedView {
    let rho = rho.clamp(0.0, 1.0);
    let mut out = slice.clone();
    for i in 0..out.len() {
        if !rng.gen_bool(rho) {
            out.positions[i] = Vec2::ZERO;
            out.valid[i] = false;
        }
    }
    AugmentedView {
        slice: out,
        strategy: Strategy::Mask,
        intensity: rho,
    }
}

/// Window length `max(1, round(gamma · len))`.
pub fn subset_window(gamma: f64, len: usize) -> usize {
    ((gamma * len as f64).round() as usize).clamp(1, len.max(1))
}

/// Keeps one contiguous window with a uniformly drawn start; everything else
/// is zeroed and flagged invalid.
pub fn subset(slice: &TrajectorySlice, gamma: f64, rng: &mut impl Rng) -> AugmentedView {
    let n = slice.len();
    let w = subset_window(gamma, n);
    let start = if n > w { rng.gen_range(0..=n - w) } else { 0 };
    let mut out = slice.clone();
    for i in (0..start).chain(start + w..n) {
        out.positions[i] = Vec2::ZERO;
        out.valid[i] = false;
    }
    AugmentedView {
        slice: out,
        strategy: Strategy::Subset,
        intensity: gamma,
    }
}

/// Applies `strategy` to the target's observed slice.
pub fn apply_strategy(scene: &Scene, strategy: Strategy, policy: &AugmentationPolicy, rng: &mut impl Rng) -> AugmentedView {
    let slice = scene.observed_slice();
    match strategy {
        Strategy::Simplify => rdp_simplify(&slice, policy.eps_rdp),
        Strategy::Shift => shift(&slice, policy.eps_shift, policy.eps_max, rng),
        Strategy::Mask => mask(&slice, policy.rho, rng),
        Strategy::Subset => subset(&slice, policy.gamma, rng),
    }
}

/// Applies the policy's most probable strategy to the target's observed slice.
pub fn apply_policy(scene: &Scene, policy: &AugmentationPolicy, rng: &mut impl Rng) -> AugmentedView {
    apply_strategy(scene, select_strategy(policy), policy, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line(n: usize) -> TrajectorySlice {
        TrajectorySlice::new((0..n).map(|i| Vec2::new(i as f64 * 1.5 - 3.0, 0.5 * i as f64 + 1.0)).collect())
    }

    #[test]
    fn selection_and_tie_break() {
        let p = |probs| AugmentationPolicy {
            probs,
            eps_rdp: 0.0,
            eps_shift: 0.0,
            eps_max: 2.0,
            rho: 1.0,
            gamma: 1.0,
        };
        assert_eq!(select_strategy(&p([0.1, 0.6, 0.2, 0.1])), Strategy::Shift);
        assert_eq!(select_strategy(&p([0.25; 4])), Strategy::Simplify);
        assert_eq!(select_strategy(&p([0.0, 0.0, 0.0, 1.0])), Strategy::Subset);
    }

    #[test]
    fn rdp_collinear_is_reproduced() {
        let s = line(10);
        let v = rdp_simplify(&s, 0.5);
        for (a, b) in v.slice.positions.iter().zip(&s.positions) {
            assert!((*a - *b).norm() < 1e-12);
        }
        assert_eq!(rdp_simplify(&s, 0.0).slice, s);
    }

    #[test]
    fn rdp_right_angle_keeps_corner() {
        let mut pts: Vec<Vec2> = (0..=5).map(|i| Vec2::new(i as f64, 0.0)).collect();
        pts.extend((1..=5).map(|i| Vec2::new(5.0, i as f64)));
        let s = TrajectorySlice::new(pts.clone());
        let v = rdp_simplify(&s, 0.1);
        assert_eq!(v.slice.positions.len(), 11);
        for (a, b) in v.slice.positions.iter().zip(&pts) {
            assert!((*a - *b).norm() < 1e-12);
        }
    }

    #[test]
    fn rdp_removes_jitter_below_tolerance() {
        let pts: Vec<Vec2> = (0..9)
            .map(|i| Vec2::new(i as f64, if i % 2 == 0 { 0.05 } else { -0.05 }))
            .collect();
        let v = rdp_simplify(&TrajectorySlice::new(pts), 0.2);
        for (i, p) in v.slice.positions.iter().enumerate() {
            assert!((p.x - i as f64).abs() < 1e-12 && (p.y - 0.05).abs() < 1e-12);
        }
    }

    #[test]
    fn shift_preserves_differences() {
        let s = line(8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(shift(&s, 0.0, 2.0, &mut rng).slice, s);
        let v = shift(&s, 5.0, 1.0, &mut rng);
        assert_eq!(v.intensity, 1.0);
        let d0 = v.slice.positions[0] - s.positions[0];
        assert!(d0.x.abs() <= 1.0 && d0.y.abs() <= 1.0);
        for (a, b) in v.slice.positions.iter().zip(&s.positions) {
            assert!((*a - *b - d0).norm() < 1e-12);
        }
    }

    #[test]
    fn shift_statistics() {
        let s = TrajectorySlice::new(vec![Vec2::ZERO]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 10_000;
        let draws: Vec<Vec2> = (0..n).map(|_| shift(&s, 1.0, 2.0, &mut rng).slice.positions[0]).collect();
        let sigma = (1.0f64 / 3.0 / n as f64).sqrt();
        let mx = draws.iter().map(|d| d.x).sum::<f64>() / n as f64;
        let my = draws.iter().map(|d| d.y).sum::<f64>() / n as f64;
        assert!(mx.abs() < 3.0 * sigma && my.abs() < 3.0 * sigma);
        assert!(draws.iter().all(|d| d.x.abs() <= 1.0 && d.y.abs() <= 1.0));
    }

    #[test]
    fn mask_extremes_and_rate() {
        let s = line(8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(mask(&s, 1.0, &mut rng).slice, s);
        let z = mask(&s, 0.0, &mut rng).slice;
        assert!(z.valid.iter().all(|v| !v) && z.positions.iter().all(|p| *p == Vec2::ZERO));
        let big = line(10_000);
        let kept = mask(&big, 0.7, &mut rng).slice.valid.iter().filter(|v| **v).count() as f64;
        let sigma = (10_000.0f64 * 0.7 * 0.3).sqrt();
        assert!((kept - 7000.0).abs() < 3.0 * sigma);
    }

    #[test]
    fn subset_window_rules() {
        let s = line(8);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert_eq!(subset(&s, 1.0, &mut rng).slice, s);
        for _ in 0..50 {
            let v = subset(&s, 0.5, &mut rng).slice;
            let kept: Vec<usize> = (0..8).filter(|&i| v.valid[i]).collect();
            assert_eq!(kept.len(), 4);
            assert_eq!(kept[3] - kept[0], 3);
            assert!(v.is_consistent());
        }
        assert_eq!(subset_window(0.01, 8), 1);
    }
}

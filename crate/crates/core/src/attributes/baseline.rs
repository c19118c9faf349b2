//! Reference predictor for the prediction-error attribute: a fan of
//! constant-acceleration / constant-turn-rate rollouts from the last observed
//! state.

use super::AttributeError;
use crate::geom::Vec2;
use crate::prediction::PredictionSet;
use crate::trajdata::Scene;

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicBaselineConfig {
    /// Number of hypotheses, taken in row-major order from the
    /// `accel_samples × yaw_rate_samples` grid.
    pub k: usize,
    /// Longitudinal accelerations, m/s².
    pub accel_samples: Vec<f64>,
    /// Turn rates, rad/s.
    pub yaw_rate_samples: Vec<f64>,
}

impl Default for KinematicBaselineConfig {
    fn default() -> Self {
        Self {
            k: 9,
            accel_samples: vec![0.0, -1.0, 1.0],
            yaw_rate_samples: vec![0.0, -0.08, 0.08],
        }
    }
}

impl KinematicBaselineConfig {
    /// Constant-velocity only.
    pub fn constant_velocity() -> Self {
        Self {
            k: 1,
            accel_samples: vec![0.0],
            yaw_rate_samples: vec![0.0],
        }
    }

    pub fn hypotheses(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for &a in &self.accel_samples {
            for &w in &self.yaw_rate_samples {
                out.push((a, w));
            }
        }
        out.truncate(self.k.max(1));
        out
    }
}

const SUBSTEPS: usize = 10;

fn rollout(origin: Vec2, vel: Vec2, heading: f64, accel: f64, yaw_rate: f64, dt: f64, steps: usize) -> Vec<Vec2> {
    if accel == 0.0 && yaw_rate == 0.0 {
        return (1..=steps).map(|k| origin + vel * (k as f64 * dt)).collect();
    }
    let mut pos = origin;
    let mut speed = vel.norm();
    let mut psi = heading;
    let h = dt / SUBSTEPS as f64;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        for _ in 0..SUBSTEPS {
            let psi_mid = psi + 0.5 * h * yaw_rate;
            let speed_mid = (speed + 0.5 * h * accel).max(0.0);
            pos += Vec2::from_polar(h * speed_mid, psi_mid);
            psi += h * yaw_rate;
            speed = (speed + h * accel).max(0.0);
        }
        out.push(pos);
    }
    out
}

/// Rolls every configured hypothesis forward `t_p` steps from the target's
/// last observed state. Mode probabilities are uniform.
pub fn baseline_predict(scene: &Scene, cfg: &KinematicBaselineConfig) -> PredictionSet {
    let last = scene.last_observed();
    let heading = if last.vel.norm() > 1e-9 {
        last.vel.angle()
    } else {
        last.heading
    };
    let modes = cfg
        .hypotheses()
        .into_iter()
        .map(|(a, w)| rollout(last.pos, last.vel, heading, a, w, scene.dt, scene.t_p))
        .collect();
    PredictionSet::uniform(modes)
}

/// Minimum over modes of the final-position error.
pub fn compute_prediction_error(scene: &Scene, baseline: &PredictionSet) -> Result<f64, AttributeError> {
    if baseline.num_modes() == 0 {
        return Err(AttributeError::LengthMismatch {
            mode: 0,
            got: 0,
            expected: scene.t_p,
        });
    }
    for (mode, m) in baseline.locations.iter().enumerate() {
        if m.len() != scene.t_p {
            return Err(AttributeError::LengthMismatch {
                mode,
                got: m.len(),
                expected: scene.t_p,
            });
        }
    }
    let truth = scene.future_positions()[scene.t_p - 1];
    Ok(baseline
        .locations
        .iter()
        .map(|m| (m[scene.t_p - 1] - truth).norm())
        .fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajdata::{AgentKind, Track};

    fn cv_scene(t_p: usize) -> Scene {
        let v = Vec2::new(3.0, -1.5);
        let pos: Vec<Vec2> = (0..4 + t_p).map(|i| Vec2::new(2.0, 7.0) + v * (i as f64 * 0.5)).collect();
        Scene {
            scene_id: "cv".into(),
            dt: 0.5,
            t_o: 4,
            t_p,
            target_id: "ego".into(),
            tracks: vec![Track::from_positions("ego", AgentKind::Vehicle, 0.0, 0.5, &pos)],
            maneuver_label: None,
        }
    }

    #[test]
    fn zero_hypothesis_reproduces_straight_continuation() {
        let scene = cv_scene(12);
        let pred = baseline_predict(&scene, &KinematicBaselineConfig::default());
        let truth = scene.future_positions();
        for (p, t) in pred.locations[0].iter().zip(&truth) {
            assert!((*p - *t).norm() < 1e-9);
        }
        assert!(compute_prediction_error(&scene, &pred).unwrap() < 1e-9);
    }

    #[test]
    fn single_constant_velocity_mode() {
        let scene = cv_scene(6);
        let pred = baseline_predict(&scene, &KinematicBaselineConfig::constant_velocity());
        assert_eq!(pred.num_modes(), 1);
        assert_eq!(pred.mode_probs, vec![1.0]);
        let last = scene.last_observed();
        assert!((pred.locations[0][5] - (last.pos + last.vel * 3.0)).norm() < 1e-12);
    }

    #[test]
    fn output_shape_is_k_by_tp() {
        let scene = cv_scene(7);
        let cfg = KinematicBaselineConfig::default();
        let pred = baseline_predict(&scene, &cfg);
        assert_eq!(pred.num_modes(), cfg.k);
        assert!(pred.locations.iter().all(|m| m.len() == 7));
        assert!(pred.scales.iter().all(|m| m.len() == 7));
    }

    #[test]
    fn prediction_error_cases() {
        let scene = cv_scene(3);
        let truth = *scene.future_positions().last().unwrap();
        let mode = |end: Vec2| vec![Vec2::ZERO, Vec2::ZERO, end];
        let exact = PredictionSet::uniform(vec![mode(truth)]);
        assert_eq!(compute_prediction_error(&scene, &exact).unwrap(), 0.0);
        let offset = PredictionSet::uniform(vec![mode(truth + Vec2::new(3.0, 4.0))]);
        assert!((compute_prediction_error(&scene, &offset).unwrap() - 5.0).abs() < 1e-12);
        let several = PredictionSet::uniform(vec![
            mode(truth + Vec2::new(2.0, 0.0)),
            mode(truth + Vec2::new(0.0, 1.2)),
            mode(truth + Vec2::new(-7.0, 0.0)),
        ]);
        assert!((compute_prediction_error(&scene, &several).unwrap() - 1.2).abs() < 1e-12);
        let short = PredictionSet::uniform(vec![vec![truth]]);
        assert!(matches!(
            compute_prediction_error(&scene, &short),
            Err(AttributeError::LengthMismatch { .. })
        ));
    }
}

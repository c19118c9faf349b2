use crate::geom::Vec2;
use crate::trajdata::{NeighborFilter, Scene, TrajectorySlice};

/// Per-step encoder features: local `x, y`, step `dx, dy`, step change
/// `ddx, ddy` (times [`ACCEL_GAIN`]), validity flag.
pub const STEP_FEATURES: usize = 7;

/// Brings second differences, a few centimetres per step at typical
/// accelerations, to the same order as the other features.
pub const ACCEL_GAIN: f64 = 25.0;

/// Rigid transform into the target-local frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub origin: Vec2,
    pub heading: f64,
}

impl Frame {
    pub fn of_scene(scene: &Scene) -> Self {
        let s = scene.last_observed();
        Self {
            origin: s.pos,
            heading: s.heading,
        }
    }

    pub fn to_local(&self, p: Vec2) -> Vec2 {
        (p - self.origin).rotate(-self.heading)
    }

    pub fn to_world(&self, p: Vec2) -> Vec2 {
        p.rotate(self.heading) + self.origin
    }
}

/// Model-ready encoder inputs for one scene, in model units.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub frame: Frame,
    /// Per-step features of the target history.
    pub target: Vec<[f64; STEP_FEATURES]>,
    /// Per-step features of each encoded neighbor, nearest first.
    pub neighbors: Vec<Vec<[f64; STEP_FEATURES]>>,
}

fn step_features(slice: &TrajectorySlice, frame: &Frame, scale: f64) -> Vec<[f64; STEP_FEATURES]> {
    let local: Vec<Vec2> = slice.positions.iter().map(|p| frame.to_local(*p) * (1.0 / scale)).collect();
    (0..slice.len())
        .map(|t| {
            if !slice.valid[t] {
                return [0.0; STEP_FEATURES];
            }
            let p = local[t];
            let step = |t: usize| (t > 0 && slice.valid[t] && slice.valid[t - 1]).then(|| local[t] - local[t - 1]);
            let d = step(t).unwrap_or(Vec2::ZERO);
            let a = match (step(t), t.checked_sub(1).and_then(step)) {
                (Some(d1), Some(d0)) => (d1 - d0) * ACCEL_GAIN,
                _ => Vec2::ZERO,
            };
            [p.x, p.y, d.x, d.y, a.x, a.y, 1.0]
        })
        .collect()
}

impl ModelInput {
    /// Builds inputs from a scene, optionally replacing the target's observed
    /// slice (e.g. with an augmented view). The frame always comes from the
    /// original scene.
    pub fn from_scene(scene: &Scene, target_view: Option<&TrajectorySlice>, max_neighbors: usize, scale: f64) -> Self {
        let frame = Frame::of_scene(scene);
        let own;
        let target_slice = match target_view {
            Some(v) => v,
            None => {
                own = scene.observed_slice();
                &own
            }
        };
        let filter = NeighborFilter {
            radius: None,
            max_count: Some(max_neighbors),
        };
        let neighbors = if max_neighbors == 0 {
            Vec::new()
        } else {
            scene
                .neighbors_filtered(filter)
                .into_iter()
                .map(|tr| step_features(&scene.observed_slice_of(tr), &frame, scale))
                .collect()
        };
        Self {
            frame,
            target: step_features(target_slice, &frame, scale),
            neighbors,
        }
    }

    /// Ground-truth future of the target in the local frame, meters.
    pub fn local_future(scene: &Scene) -> Vec<Vec2> {
        let frame = Frame::of_scene(scene);
        scene.future_positions().into_iter().map(|p| frame.to_local(p)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_round_trip() {
        let f = Frame {
            origin: Vec2::new(3.0, -2.0),
            heading: 1.1,
        };
        let p = Vec2::new(-7.5, 4.25);
        assert!((f.to_world(f.to_local(p)) - p).norm() < 1e-12);
        assert!(f.to_local(f.origin).norm() < 1e-15);
        let ahead = f.origin + Vec2::from_polar(2.0, 1.1);
        let l = f.to_local(ahead);
        assert!((l.x - 2.0).abs() < 1e-12 && l.y.abs() < 1e-12);
    }

    #[test]
    fn masked_steps_are_zero_rows() {
        let slice = TrajectorySlice {
            positions: vec![Vec2::new(1.0, 0.0), Vec2::ZERO, Vec2::new(3.0, 0.0)],
            valid: vec![true, false, true],
        };
        let f = Frame {
            origin: Vec2::ZERO,
            heading: 0.0,
        };
        let feats = step_features(&slice, &f, 1.0);
        assert_eq!(feats[1], [0.0; STEP_FEATURES]);
        assert_eq!(feats[2], [3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(feats[0][6], 1.0);
    }
}

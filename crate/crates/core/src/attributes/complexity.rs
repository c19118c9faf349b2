//! State complexity: peak jerk and peak yaw rate of a track.

use super::AttributeError;
use crate::geom::{wrap_angle, Vec2};
use crate::trajdata::Track;

/// Central differences in the interior, one-sided at both ends.
fn derivative(values: &[Vec2], dt: f64) -> Vec<Vec2> {
    let n = values.len();
    (0..n)
        .map(|i| {
            if i == 0 {
                (values[1] - values[0]) * (1.0 / dt)
            } else if i == n - 1 {
                (values[n - 1] - values[n - 2]) * (1.0 / dt)
            } else {
                (values[i + 1] - values[i - 1]) * (0.5 / dt)
            }
        })
        .collect()
}

/// Returns `(max ‖jerk‖, max |yaw rate|)`. Jerk is the second difference of the
/// stored velocities; yaw rate is the wrapped heading difference over `dt`.
pub fn state_complexity_terms(track: &Track) -> Result<(f64, f64), AttributeError> {
    let n = track.states.len();
    if n < 4 {
        return Err(AttributeError::TrackTooShort {
            agent_id: track.agent_id.clone(),
            len: n,
        });
    }
    let dt = track.states[1].t - track.states[0].t;
    let vel: Vec<Vec2> = track.states.iter().map(|s| s.vel).collect();
    let accel = derivative(&vel, dt);
    let jerk = derivative(&accel, dt);
    let max_jerk = jerk.iter().map(|j| j.norm()).fold(0.0, f64::max);
    let max_yaw = track
        .states
        .windows(2)
        .map(|w| (wrap_angle(w[1].heading - w[0].heading) / dt).abs())
        .fold(0.0, f64::max);
    Ok((max_jerk, max_yaw))
}

/// `alpha · max‖jerk‖ + beta · max|yaw rate|`.
pub fn compute_state_complexity(track: &Track, alpha: f64, beta: f64) -> Result<f64, AttributeError> {
    let (jerk, yaw) = state_complexity_terms(track)?;
    Ok(alpha * jerk + beta * yaw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajdata::{AgentKind, AgentState};
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn circular(speed: f64, radius: f64, dt: f64, n: usize) -> Track {
        let omega = speed / radius;
        let states = (0..n)
            .map(|i| {
                let t = i as f64 * dt;
                let phase = omega * t;
                AgentState {
                    t,
                    pos: Vec2::from_polar(radius, phase),
                    vel: Vec2::from_polar(speed, phase + FRAC_PI_2),
                    heading: wrap_angle(phase + FRAC_PI_2),
                }
            })
            .collect();
        Track {
            agent_id: "c".into(),
            kind: AgentKind::Vehicle,
            states,
        }
    }

    #[test]
    fn straight_track_has_zero_complexity() {
        let pos: Vec<Vec2> = (0..10).map(|i| Vec2::new(i as f64 * 2.0, 1.0)).collect();
        let t = Track::from_positions("s", AgentKind::Vehicle, 0.0, 0.5, &pos);
        assert!(compute_state_complexity(&t, 1.0, 1.0).unwrap() < 1e-9);
    }

    #[test]
    fn uniform_circular_motion_matches_analytic_value() {
        for &(v, r) in &[(10.0, 20.0), (5.0, 50.0), (2.0, 4.0)] {
            let dt = 0.05 * r / v;
            let track = circular(v, r, dt, 200);
            let expected = v * v * v / (r * r) + v / r;
            let got = compute_state_complexity(&track, 1.0, 1.0).unwrap();
            assert!((got - expected).abs() / expected < 0.02, "v={v} r={r}: {got} vs {expected}");
        }
    }

    #[test]
    fn zero_alpha_leaves_yaw_rate() {
        let track = circular(8.0, 16.0, 0.1, 40);
        let (_, yaw) = state_complexity_terms(&track).unwrap();
        assert_eq!(compute_state_complexity(&track, 0.0, 2.5).unwrap(), 2.5 * yaw);
        assert!((yaw - 0.5).abs() < 1e-9);
    }

    #[test]
    fn short_track_rejected() {
        let pos = [Vec2::ZERO, Vec2::new(1.0, 0.0), Vec2::new(2.0, 0.0)];
        let t = Track::from_positions("s", AgentKind::Vehicle, 0.0, 1.0, &pos);
        assert!(matches!(
            compute_state_complexity(&t, 1.0, 1.0),
            Err(AttributeError::TrackTooShort { len: 3, .. })
        ));
    }

    proptest! {
        #[test]
        fn jerk_term_is_rotation_and_translation_invariant(theta in -3.1f64..3.1, dx in -50.0f64..50.0) {
            let base = circular(6.0, 15.0, 0.2, 30);
            let mut moved = base.clone();
            for s in &mut moved.states {
                s.pos = s.pos.rotate(theta) + Vec2::new(dx, -dx);
                s.vel = s.vel.rotate(theta);
                s.heading = wrap_angle(s.heading + theta);
            }
            let (j0, y0) = state_complexity_terms(&base).unwrap();
            let (j1, y1) = state_complexity_terms(&moved).unwrap();
            prop_assert!((j0 - j1).abs() < 1e-9 * (1.0 + j0));
            prop_assert!((y0 - y1).abs() < 1e-9);
        }
    }
}

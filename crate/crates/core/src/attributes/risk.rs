//! Collision risk as the peak inverse time-to-collision between the target and
//! any neighbor.

use super::AttributeError;
use crate::geom::Vec2;
use crate::trajdata::{NeighborFilter, Scene};

/// Distance below which two agents are treated as coincident, meters.
pub const COINCIDENT_DIST: f64 = 1e-6;

/// Which target steps the maximum ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RiskWindow {
    /// Observed and future steps.
    #[default]
    Full,
    Observed,
    Future,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RiskConfig {
    pub window: RiskWindow,
    pub neighbors: NeighborFilter,
}

/// `[-Δc·Δv]₊ / ‖Δc‖²` for relative position `Δc = c_j − c_target` and relative
/// velocity `Δv = v_j − v_target`.
pub fn inv_ttc(rel_pos: Vec2, rel_vel: Vec2) -> f64 {
    let closing = -rel_pos.dot(rel_vel);
    closing.max(0.0) / rel_pos.norm_sq()
}

/// Maximum InvTTC over the configured window and every neighbor; 0 when no
/// neighbor overlaps the window.
pub fn compute_collision_risk(scene: &Scene, cfg: &RiskConfig) -> Result<f64, AttributeError> {
    let target = scene.target();
    let range = match cfg.window {
        RiskWindow::Full => 0..target.states.len(),
        RiskWindow::Observed => 0..scene.t_o,
        RiskWindow::Future => scene.t_o..scene.t_o + scene.t_p,
    };
    let neighbors = scene.neighbors_filtered(cfg.neighbors);
    let mut risk: f64 = 0.0;
    for ts in &target.states[range] {
        for n in &neighbors {
            let Some(j) = n.index_at(ts.t) else { continue };
            let ns = &n.states[j];
            let rel = ns.pos - ts.pos;
            if rel.norm() < COINCIDENT_DIST {
                return Err(AttributeError::CoincidentAgents {
                    scene_id: scene.scene_id.clone(),
                    agent_id: n.agent_id.clone(),
                    t: ts.t,
                });
            }
            risk = risk.max(inv_ttc(rel, ns.vel - ts.vel));
        }
    }
    Ok(risk)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajdata::{AgentKind, AgentState, Track};
    use proptest::prelude::*;

    fn state(t: f64, pos: Vec2, vel: Vec2) -> AgentState {
        AgentState {
            t,
            pos,
            vel,
            heading: vel.angle(),
        }
    }

    fn two_agent(target: (Vec2, Vec2), other: (Vec2, Vec2)) -> Scene {
        // Two states per agent, both with the same pose so only t=0 and t=1
        // contribute identical terms.
        let mk = |id: &str, (p, v): (Vec2, Vec2)| Track {
            agent_id: id.into(),
            kind: AgentKind::Vehicle,
            states: vec![state(0.0, p, v), state(1.0, p, v)],
        };
        Scene {
            scene_id: "pair".into(),
            dt: 1.0,
            t_o: 1,
            t_p: 1,
            target_id: "ego".into(),
            tracks: vec![mk("ego", target), mk("other", other)],
            maneuver_label: None,
        }
    }

    #[test]
    fn head_on_closing_pair() {
        let s = two_agent(
            (Vec2::ZERO, Vec2::new(1.0, 0.0)),
            (Vec2::new(10.0, 0.0), Vec2::new(-1.0, 0.0)),
        );
        let r = compute_collision_risk(&s, &RiskConfig::default()).unwrap();
        assert!((r - 0.2).abs() < 1e-12);
    }

    #[test]
    fn receding_and_absent_neighbors_give_zero() {
        let s = two_agent(
            (Vec2::ZERO, Vec2::new(-1.0, 0.0)),
            (Vec2::new(10.0, 0.0), Vec2::new(1.0, 0.0)),
        );
        assert_eq!(compute_collision_risk(&s, &RiskConfig::default()).unwrap(), 0.0);
        let mut alone = s.clone();
        alone.tracks.truncate(1);
        assert_eq!(compute_collision_risk(&alone, &RiskConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn coincident_agents_error() {
        let s = two_agent((Vec2::ZERO, Vec2::ZERO), (Vec2::new(1e-8, 0.0), Vec2::ZERO));
        assert!(matches!(
            compute_collision_risk(&s, &RiskConfig::default()),
            Err(AttributeError::CoincidentAgents { .. })
        ));
    }

    /// Steps both agents at constant velocity until the gap first drops below
    /// 1 mm and returns the elapsed time.
    pub(crate) fn simulated_ttc(c_t: Vec2, v_t: Vec2, c_j: Vec2, v_j: Vec2) -> Option<f64> {
        let h = 1e-3;
        let mut k = 0u64;
        loop {
            let t = k as f64 * h;
            let gap = ((c_j + v_j * t) - (c_t + v_t * t)).norm();
            if gap < 1e-3 {
                return Some(t);
            }
            if t > 1e4 {
                return None;
            }
            k += 1;
        }
    }

    #[test]
    fn closed_form_matches_simulation_on_head_on_pair() {
        let c_t = Vec2::new(1.0, 2.0);
        let v_t = Vec2::new(3.0, 1.0);
        let dir = Vec2::new(0.6, 0.8);
        let c_j = c_t + dir * 12.0;
        let v_j = v_t - dir * 4.0;
        let closed = inv_ttc(c_j - c_t, v_j - v_t);
        let sim = 1.0 / simulated_ttc(c_t, v_t, c_j, v_j).unwrap();
        assert!((closed - sim).abs() / sim < 0.02);
    }

    proptest! {
        #[test]
        fn risk_is_translation_and_rotation_invariant(
            dx in -100.0f64..100.0, dy in -100.0f64..100.0, theta in -3.0f64..3.0,
            px in 2.0f64..30.0, py in -10.0f64..10.0, vx in -5.0f64..5.0, vy in -5.0f64..5.0,
        ) {
            let base = two_agent((Vec2::ZERO, Vec2::new(2.0, 0.5)), (Vec2::new(px, py), Vec2::new(vx, vy)));
            let r0 = compute_collision_risk(&base, &RiskConfig::default()).unwrap();
            let mut moved = base.clone();
            for tr in &mut moved.tracks {
                for s in &mut tr.states {
                    s.pos = s.pos.rotate(theta) + Vec2::new(dx, dy);
                    s.vel = s.vel.rotate(theta);
                    s.heading = crate::geom::wrap_angle(s.heading + theta);
                }
            }
            let r1 = compute_collision_risk(&moved, &RiskConfig::default()).unwrap();
            prop_assert!((r0 - r1).abs() <= 1e-9 * (1.0 + r0.abs()));
        }
    }
}

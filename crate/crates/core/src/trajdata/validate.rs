use super::{Scene, SPACING_TOL};
use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt;

/// One violated invariant, naming the offending field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            field: field.into(),
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join("; "))
    }
}

/// Lists every violated scene invariant. An empty report means the scene is valid.
pub fn validate_scene(scene: &Scene) -> ValidationReport {
    let mut report = ValidationReport::default();

    if !(scene.dt.is_finite() && scene.dt > 0.0) {
        report.push("dt", format!("must be finite and positive, got {}", scene.dt));
    }
    if scene.t_o == 0 {
        report.push("t_o", "observation length must be at least 1");
    }
    if scene.t_p == 0 {
        report.push("t_p", "prediction length must be at least 1");
    }

    let mut seen = BTreeSet::new();
    for track in &scene.tracks {
        if !seen.insert(track.agent_id.as_str()) {
            report.push(
                format!("tracks[{}].agent_id", track.agent_id),
                "duplicate agent id",
            );
        }
    }

    match scene.tracks.iter().find(|t| t.agent_id == scene.target_id) {
        None => report.push(
            "target_id",
            format!("target {} not present in tracks", scene.target_id),
        ),
        Some(target) => {
            let need = scene.t_o + scene.t_p;
            if target.states.len() < need {
                report.push(
                    format!("tracks[{}].states", target.agent_id),
                    format!(
                        "target track has {} states, needs t_o + t_p = {}",
                        target.states.len(),
                        need
                    ),
                );
            }
        }
    }

    for track in &scene.tracks {
        let base = format!("tracks[{}]", track.agent_id);
        if track.states.len() < 2 {
            report.push(format!("{base}.states"), "track needs at least 2 states");
        }
        for (i, s) in track.states.iter().enumerate() {
            let fields = [
                ("t", s.t),
                ("x", s.pos.x),
                ("y", s.pos.y),
                ("vx", s.vel.x),
                ("vy", s.vel.y),
                ("heading", s.heading),
            ];
            for (name, value) in fields {
                if !value.is_finite() {
                    report.push(format!("{base}.states[{i}].{name}"), "non-finite value");
                }
            }
            if s.heading.is_finite() && !(s.heading > -PI && s.heading <= PI) {
                report.push(
                    format!("{base}.states[{i}].heading"),
                    format!("{} outside (-pi, pi]", s.heading),
                );
            }
        }
        for (i, w) in track.states.windows(2).enumerate() {
            let gap = w[1].t - w[0].t;
            if !(gap > 0.0) {
                report.push(
                    format!("{base}.states[{}].t", i + 1),
                    "timestamps not strictly increasing",
                );
            } else if scene.dt.is_finite() && (gap - scene.dt).abs() > SPACING_TOL {
                report.push(
                    format!("{base}.states[{}].t", i + 1),
                    format!("spacing {gap} differs from dt {}", scene.dt),
                );
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec2;
    use crate::trajdata::{AgentKind, Track};

    fn scene() -> Scene {
        let pos: Vec<Vec2> = (0..6).map(|i| Vec2::new(i as f64, 0.0)).collect();
        Scene {
            scene_id: "s0".into(),
            dt: 0.5,
            t_o: 3,
            t_p: 3,
            target_id: "ego".into(),
            tracks: vec![Track::from_positions("ego", AgentKind::Vehicle, 0.0, 0.5, &pos)],
            maneuver_label: None,
        }
    }

    #[test]
    fn valid_scene_has_empty_report() {
        assert!(validate_scene(&scene()).is_valid());
    }

    #[test]
    fn nan_position_names_field() {
        let mut s = scene();
        s.tracks[0].states[2].pos.x = f64::NAN;
        let r = validate_scene(&s);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].field, "tracks[ego].states[2].x");
    }

    #[test]
    fn short_target_is_one_violation() {
        let mut s = scene();
        s.t_p = 4;
        let r = validate_scene(&s);
        assert_eq!(r.violations.len(), 1, "{r}");
        assert!(r.violations[0].message.contains("t_o + t_p"));
    }

    #[test]
    fn missing_target_and_bad_time_reported() {
        let mut s = scene();
        s.target_id = "other".into();
        s.tracks[0].states[4].t = 1.0;
        let r = validate_scene(&s);
        assert!(r.violations.iter().any(|v| v.field == "target_id"));
        assert!(r.violations.iter().any(|v| v.field.ends_with("states[4].t")));
    }
}

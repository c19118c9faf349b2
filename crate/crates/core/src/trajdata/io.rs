//! Scene files: one JSON object per line.
//!
//! ```text
//! {"scene_id":"s0","dt":0.4,"t_o":8,"t_p":12,"target_id":"ego","maneuver_label":0,
//!  "tracks":[{"agent_id":"ego","kind":"vehicle","states":[{"t":0.0,"x":1.0,"y":2.0,"vx":10.0,"vy":0.0,"heading":0.0}, ...]}]}
//! ```
//!
//! `maneuver_label` is optional. Per-state `vx`, `vy` and `heading` may be
//! omitted; they are then reconstructed from forward position differences.

use super::{reconstruct_states, validate_scene, AgentKind, Scene, Track, TrajdataError};
use crate::geom::Vec2;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateRecord {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackRecord {
    pub agent_id: String,
    pub kind: AgentKind,
    pub states: Vec<StateRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneRecord {
    pub scene_id: String,
    pub dt: f64,
    pub t_o: usize,
    pub t_p: usize,
    pub target_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maneuver_label: Option<u8>,
    pub tracks: Vec<TrackRecord>,
}

impl From<&Track> for TrackRecord {
    fn from(track: &Track) -> Self {
        TrackRecord {
            agent_id: track.agent_id.clone(),
            kind: track.kind,
            states: track
                .states
                .iter()
                .map(|s| StateRecord {
                    t: s.t,
                    x: s.pos.x,
                    y: s.pos.y,
                    vx: Some(s.vel.x),
                    vy: Some(s.vel.y),
                    heading: Some(s.heading),
                })
                .collect(),
        }
    }
}

impl From<&Scene> for SceneRecord {
    fn from(scene: &Scene) -> Self {
        SceneRecord {
            scene_id: scene.scene_id.clone(),
            dt: scene.dt,
            t_o: scene.t_o,
            t_p: scene.t_p,
            target_id: scene.target_id.clone(),
            maneuver_label: scene.maneuver_label,
            tracks: scene.tracks.iter().map(TrackRecord::from).collect(),
        }
    }
}

/// Serializes one scene as a single-line record.
pub fn scene_to_record(scene: &Scene) -> String {
    serde_json::to_string(&SceneRecord::from(scene)).expect("scene records always serialize")
}

pub fn write_scene_file(path: impl AsRef<Path>, scenes: &[Scene]) -> Result<(), TrajdataError> {
    let mut out = BufWriter::new(File::create(path)?);
    for scene in scenes {
        out.write_all(scene_to_record(scene).as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn parse_scene_file(path: impl AsRef<Path>) -> Result<Vec<Scene>, TrajdataError> {
    parse_scenes(BufReader::new(File::open(path)?))
}

/// Parses scene records from any line reader. Blank lines are skipped; line
/// numbers in errors are 1-based.
pub fn parse_scenes(reader: impl BufRead) -> Result<Vec<Scene>, TrajdataError> {
    let mut scenes = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        scenes.push(parse_record(&line, idx + 1)?);
    }
    if scenes.is_empty() {
        return Err(TrajdataError::MissingScenes);
    }
    Ok(scenes)
}

fn parse_record(text: &str, line: usize) -> Result<Scene, TrajdataError> {
    let record: SceneRecord =
        serde_json::from_str(text).map_err(|e| TrajdataError::MalformedRecord {
            line,
            message: e.to_string(),
        })?;
    record_to_scene(record, line)
}

pub(crate) fn record_to_scene(record: SceneRecord, line: usize) -> Result<Scene, TrajdataError> {
    let mut tracks = Vec::with_capacity(record.tracks.len());
    for tr in record.tracks {
        for (step, w) in tr.states.windows(2).enumerate() {
            if !(w[1].t > w[0].t) {
                return Err(TrajdataError::NonMonotonicTime {
                    line,
                    agent_id: tr.agent_id,
                    step: step + 1,
                });
            }
        }
        let mut times = Vec::with_capacity(tr.states.len());
        let mut positions = Vec::with_capacity(tr.states.len());
        let mut velocities = Vec::with_capacity(tr.states.len());
        let mut headings = Vec::with_capacity(tr.states.len());
        for (i, s) in tr.states.iter().enumerate() {
            times.push(s.t);
            positions.push(Vec2::new(s.x, s.y));
            velocities.push(match (s.vx, s.vy) {
                (Some(vx), Some(vy)) => Some(Vec2::new(vx, vy)),
                (None, None) => None,
                _ => {
                    return Err(TrajdataError::MalformedRecord {
                        line,
                        message: format!(
                            "agent {} state {i}: vx and vy must be given together",
                            tr.agent_id
                        ),
                    })
                }
            });
            headings.push(s.heading);
        }
        let states = reconstruct_states(&times, &positions, Some(&velocities), Some(&headings));
        tracks.push(Track {
            agent_id: tr.agent_id,
            kind: tr.kind,
            states,
        });
    }
    if !tracks.iter().any(|t| t.agent_id == record.target_id) {
        return Err(TrajdataError::MissingTarget {
            line,
            target_id: record.target_id,
        });
    }
    let scene = Scene {
        scene_id: record.scene_id,
        dt: record.dt,
        t_o: record.t_o,
        t_p: record.t_p,
        target_id: record.target_id,
        tracks,
        maneuver_label: record.maneuver_label,
    };
    let report = validate_scene(&scene);
    if !report.is_valid() {
        return Err(TrajdataError::MalformedRecord {
            line,
            message: report.to_string(),
        });
    }
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn fixture() -> String {
        // 1 scene, 2 agents, t_o = 4, t_p = 12: target has 16 states.
        let ego: Vec<String> = (0..16)
            .map(|i| format!(r#"{{"t":{},"x":{},"y":0.0}}"#, i as f64 * 0.5, i as f64 * 5.0))
            .collect();
        let other: Vec<String> = (0..16)
            .map(|i| {
                format!(
                    r#"{{"t":{},"x":{},"y":3.5,"vx":-4.0,"vy":0.0,"heading":3.141592653589793}}"#,
                    i as f64 * 0.5,
                    100.0 - i as f64 * 2.0
                )
            })
            .collect();
        format!(
            r#"{{"scene_id":"fx","dt":0.5,"t_o":4,"t_p":12,"target_id":"ego","tracks":[{{"agent_id":"ego","kind":"vehicle","states":[{}]}},{{"agent_id":"car","kind":"vehicle","states":[{}]}}]}}"#,
            ego.join(","),
            other.join(",")
        )
    }

    #[test]
    fn empty_file_is_missing_scenes() {
        let err = parse_scenes(Cursor::new("")).unwrap_err();
        assert!(matches!(err, TrajdataError::MissingScenes));
        let err = parse_scenes(Cursor::new("\n\n")).unwrap_err();
        assert!(matches!(err, TrajdataError::MissingScenes));
    }

    #[test]
    fn fixture_parses_to_one_scene() {
        let scenes = parse_scenes(Cursor::new(fixture())).unwrap();
        assert_eq!(scenes.len(), 1);
        let s = &scenes[0];
        assert_eq!(s.tracks.len(), 2);
        assert_eq!(s.target().len(), 16);
        assert_eq!(s.t_o + s.t_p, 16);
        // reconstructed velocity from forward differences: 5 m per 0.5 s
        assert!((s.target().states[3].vel.x - 10.0).abs() < 1e-12);
        assert_eq!(s.target().states[3].heading, 0.0);
    }

    #[test]
    fn decreasing_time_at_step_three() {
        let text = r#"{"scene_id":"x","dt":1.0,"t_o":2,"t_p":2,"target_id":"a","tracks":[{"agent_id":"a","kind":"vehicle","states":[{"t":0,"x":0,"y":0},{"t":1,"x":1,"y":0},{"t":2,"x":2,"y":0},{"t":1.5,"x":3,"y":0}]}]}"#;
        match parse_scenes(Cursor::new(text)).unwrap_err() {
            TrajdataError::NonMonotonicTime { line, step, .. } => {
                assert_eq!(line, 1);
                assert_eq!(step, 3);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn missing_target_and_malformed_lines() {
        let missing = r#"{"scene_id":"x","dt":1.0,"t_o":1,"t_p":1,"target_id":"zz","tracks":[{"agent_id":"a","kind":"vehicle","states":[{"t":0,"x":0,"y":0},{"t":1,"x":1,"y":0}]}]}"#;
        assert!(matches!(
            parse_scenes(Cursor::new(missing)).unwrap_err(),
            TrajdataError::MissingTarget { line: 1, .. }
        ));
        let text = format!("{}\n{{not json", fixture());
        match parse_scenes(Cursor::new(text)).unwrap_err() {
            TrajdataError::MalformedRecord { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn record_round_trip_is_exact() {
        let scenes = parse_scenes(Cursor::new(fixture())).unwrap();
        let text = scene_to_record(&scenes[0]);
        let again = parse_scenes(Cursor::new(text)).unwrap();
        assert_eq!(scenes, again);
    }
}

//! Scene and track data model, the line-oriented scene file format, validation
//! and the seeded synthetic generator.

mod io;
mod synth;
mod validate;

pub use io::{parse_scene_file, parse_scenes, scene_to_record, write_scene_file, SceneRecord, StateRecord, TrackRecord};
pub use synth::{generate_synthetic_dataset, Maneuver, SynthConfig};
pub use validate::{validate_scene, ValidationReport, Violation};

use crate::geom::{wrap_angle, Vec2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the uniformity of state spacing within a track, in seconds.
pub const SPACING_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum TrajdataError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("scene file contains no scenes")]
    MissingScenes,
    #[error("line {line}: agent {agent_id} time not strictly increasing at step {step}")]
    NonMonotonicTime {
        line: usize,
        agent_id: String,
        step: usize,
    },
    #[error("line {line}: target agent {target_id} not present in tracks")]
    MissingTarget { line: usize, target_id: String },
    #[error("line {line}: malformed record: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("invalid class weights: {0}")]
    InvalidWeights(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Vehicle,
    Pedestrian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub t: f64,
    pub pos: Vec2,
    pub vel: Vec2,
    /// Heading in `(-π, π]`.
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub agent_id: String,
    pub kind: AgentKind,
    pub states: Vec<AgentState>,
}

impl Track {
    /// Builds a track from positions alone, reconstructing velocity by forward
    /// differences (backward at the final state) and heading from the
    /// displacement direction.
    pub fn from_positions(
        agent_id: impl Into<String>,
        kind: AgentKind,
        t0: f64,
        dt: f64,
        positions: &[Vec2],
    ) -> Self {
        let times: Vec<f64> = (0..positions.len()).map(|i| t0 + i as f64 * dt).collect();
        let states = reconstruct_states(&times, positions, None, None);
        Self {
            agent_id: agent_id.into(),
            kind,
            states,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Index of the state stamped `t`, if any.
    pub fn index_at(&self, t: f64) -> Option<usize> {
        let first = self.states.first()?;
        if self.states.len() == 1 {
            return ((first.t - t).abs() < SPACING_TOL).then_some(0);
        }
        let step = self.states[1].t - first.t;
        let idx = ((t - first.t) / step).round();
        if idx < 0.0 || idx as usize >= self.states.len() {
            return None;
        }
        let idx = idx as usize;
        ((self.states[idx].t - t).abs() < SPACING_TOL).then_some(idx)
    }
}

/// Fills velocity and heading for a sequence of positions. Supplied values are
/// kept; missing ones come from forward differences and `atan2`.
pub(crate) fn reconstruct_states(
    times: &[f64],
    positions: &[Vec2],
    velocities: Option<&[Option<Vec2>]>,
    headings: Option<&[Option<f64>]>,
) -> Vec<AgentState> {
    let n = positions.len();
    let mut states = Vec::with_capacity(n);
    let mut last_heading = 0.0;
    for i in 0..n {
        let fd = if n < 2 {
            Vec2::ZERO
        } else if i + 1 < n {
            (positions[i + 1] - positions[i]) * (1.0 / (times[i + 1] - times[i]))
        } else {
            (positions[i] - positions[i - 1]) * (1.0 / (times[i] - times[i - 1]))
        };
        let vel = velocities.and_then(|v| v[i]).unwrap_or(fd);
        let heading = match headings.and_then(|h| h[i]) {
            Some(h) => wrap_angle(h),
            None if vel.norm() > 1e-9 => vel.angle(),
            None => last_heading,
        };
        last_heading = heading;
        states.push(AgentState {
            t: times[i],
            pos: positions[i],
            vel,
            heading,
        });
    }
    states
}

/// An ordered sequence of planar points with a per-point validity flag.
/// Masked-out points hold the zero vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySlice {
    pub positions: Vec<Vec2>,
    pub valid: Vec<bool>,
}

impl TrajectorySlice {
    pub fn new(positions: Vec<Vec2>) -> Self {
        let valid = vec![true; positions.len()];
        Self { positions, valid }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// True when lengths agree and every invalid point is exactly zero.
    pub fn is_consistent(&self) -> bool {
        self.positions.len() == self.valid.len()
            && self
                .positions
                .iter()
                .zip(&self.valid)
                .all(|(p, &v)| v || (p.x == 0.0 && p.y == 0.0))
    }
}

/// One prediction instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub scene_id: String,
    pub dt: f64,
    /// Observation length in steps.
    pub t_o: usize,
    /// Prediction length in steps.
    pub t_p: usize,
    pub target_id: String,
    pub tracks: Vec<Track>,
    pub maneuver_label: Option<u8>,
}

/// Which non-target agents count as neighbors. The default admits every agent
/// in the record.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NeighborFilter {
    /// Maximum distance to the target at the last observed step, in meters.
    pub radius: Option<f64>,
    /// Keep only the nearest `max_count` neighbors.
    pub max_count: Option<usize>,
}

impl Scene {
    pub fn target(&self) -> &Track {
        self.tracks
            .iter()
            .find(|t| t.agent_id == self.target_id)
            .expect("scene invariant: target track present")
    }

    pub fn neighbors(&self) -> impl Iterator<Item = &Track> {
        self.tracks.iter().filter(|t| t.agent_id != self.target_id)
    }

    /// Neighbors admitted by `filter`, nearest first (ties by agent id).
    pub fn neighbors_filtered(&self, filter: NeighborFilter) -> Vec<&Track> {
        let anchor = self.last_observed();
        let mut ranked: Vec<(f64, &Track)> = self
            .neighbors()
            .map(|n| {
                let d = n
                    .index_at(anchor.t)
                    .map(|i| (n.states[i].pos - anchor.pos).norm())
                    .unwrap_or(f64::INFINITY);
                (d, n)
            })
            .filter(|(d, _)| filter.radius.map_or(true, |r| *d <= r))
            .collect();
        if filter.max_count.is_some() {
            ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.agent_id.cmp(&b.1.agent_id)));
        }
        let keep = filter.max_count.unwrap_or(usize::MAX);
        ranked.into_iter().take(keep).map(|(_, t)| t).collect()
    }

    /// The target's last observed state.
    pub fn last_observed(&self) -> &AgentState {
        &self.target().states[self.t_o - 1]
    }

    /// The target's observed positions as a fully valid slice.
    pub fn observed_slice(&self) -> TrajectorySlice {
        TrajectorySlice::new(self.target().states[..self.t_o].iter().map(|s| s.pos).collect())
    }

    /// Ground-truth future positions of the target.
    pub fn future_positions(&self) -> Vec<Vec2> {
        self.target().states[self.t_o..self.t_o + self.t_p]
            .iter()
            .map(|s| s.pos)
            .collect()
    }

    /// Observed slice of an arbitrary track aligned to the target's observation
    /// timestamps. Steps the track does not cover are invalid.
    pub fn observed_slice_of(&self, track: &Track) -> TrajectorySlice {
        let target = self.target();
        let mut positions = Vec::with_capacity(self.t_o);
        let mut valid = Vec::with_capacity(self.t_o);
        for s in &target.states[..self.t_o] {
            match track.index_at(s.t) {
                Some(i) => {
                    positions.push(track.states[i].pos);
                    valid.push(true);
                }
                None => {
                    positions.push(Vec2::ZERO);
                    valid.push(false);
                }
            }
        }
        TrajectorySlice { positions, valid }
    }
}

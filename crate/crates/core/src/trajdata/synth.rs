//! Seeded synthetic scenes with an imbalanced maneuver taxonomy.
//!
//! Each scene draws from its own ChaCha stream (`seed`, stream = scene index),
//! so generation order and thread count do not affect the output.

use super::{AgentKind, Scene, Track, TrajdataError};
use crate::geom::Vec2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::{PI, TAU};

/// Ground-truth maneuver classes of synthetic scenes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Maneuver {
    Normal = 0,
    AbruptAcceleration = 1,
    AbruptDeceleration = 2,
    LaneChange = 3,
    HighCurvatureTurn = 4,
}

impl Maneuver {
    pub const ALL: [Maneuver; 5] = [
        Maneuver::Normal,
        Maneuver::AbruptAcceleration,
        Maneuver::AbruptDeceleration,
        Maneuver::LaneChange,
        Maneuver::HighCurvatureTurn,
    ];

    pub fn label(self) -> u8 {
        self as u8
    }

    pub fn from_label(label: u8) -> Option<Self> {
        Self::ALL.get(label as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Maneuver::Normal => "normal",
            Maneuver::AbruptAcceleration => "abrupt_acceleration",
            Maneuver::AbruptDeceleration => "abrupt_deceleration",
            Maneuver::LaneChange => "lane_change",
            Maneuver::HighCurvatureTurn => "high_curvature_turn",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n: usize,
    /// Probabilities of the classes in [`Maneuver::ALL`] order.
    pub class_weights: [f64; 5],
    pub seed: u64,
    pub dt: f64,
    pub t_o: usize,
    pub t_p: usize,
    pub max_neighbors: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            class_weights: [0.8, 0.05, 0.05, 0.05, 0.05],
            seed: 7,
            dt: 0.4,
            t_o: 8,
            t_p: 12,
            max_neighbors: 3,
        }
    }
}

pub fn generate_synthetic_dataset(cfg: &SynthConfig) -> Result<Vec<Scene>, TrajdataError> {
    if cfg.class_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(TrajdataError::InvalidWeights(format!(
            "weights must be nonnegative, got {:?}",
            cfg.class_weights
        )));
    }
    let sum: f64 = cfg.class_weights.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(TrajdataError::InvalidWeights(format!("weights sum to {sum}, not 1")));
    }
    if cfg.n == 0 {
        return Err(TrajdataError::InvalidWeights("scene count must be at least 1".into()));
    }
    if !(cfg.dt > 0.0) || cfg.t_o < 2 || cfg.t_p < 1 {
        return Err(TrajdataError::InvalidWeights(format!(
            "need dt > 0, t_o >= 2, t_p >= 1 (got dt={}, t_o={}, t_p={})",
            cfg.dt, cfg.t_o, cfg.t_p
        )));
    }
    Ok((0..cfg.n).into_par_iter().map(|i| generate_scene(cfg, i)).collect())
}

fn draw_class(weights: &[f64; 5], rng: &mut ChaCha8Rng) -> Maneuver {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (m, w) in Maneuver::ALL.iter().zip(weights) {
        acc += w;
        if u < acc {
            return *m;
        }
    }
    // u landed in the rounding gap above the cumulative sum
    *Maneuver::ALL
        .iter()
        .zip(weights)
        .rev()
        .find(|(_, w)| **w > 0.0)
        .map(|(m, _)| m)
        .unwrap_or(&Maneuver::Normal)
}

/// Longitudinal acceleration and yaw-rate programs, as functions of time.
#[derive(Debug, Clone, Copy)]
enum Control {
    /// Gentle sinusoidal speed and heading variation.
    Cruise {
        accel_amp: f64,
        accel_period: f64,
        accel_phase: f64,
        yaw_amp: f64,
        yaw_period: f64,
        yaw_phase: f64,
    },
    Pulse { onset: f64, ramp: f64, hold: f64, accel: f64 },
    Weave { onset: f64, duration: f64, amplitude: f64 },
    Turn { onset: f64, ramp: f64, hold: f64, yaw_rate: f64 },
}

/// Trapezoid: 0 before `onset`, rises over `ramp`, holds, falls over `ramp`.
fn trapezoid(t: f64, onset: f64, ramp: f64, hold: f64) -> f64 {
    let s = t - onset;
    if s <= 0.0 {
        0.0
    } else if s < ramp {
        s / ramp
    } else if s < ramp + hold {
        1.0
    } else if s < 2.0 * ramp + hold {
        1.0 - (s - ramp - hold) / ramp
    } else {
        0.0
    }
}

impl Control {
    fn at(&self, t: f64) -> (f64, f64) {
        match *self {
            Control::Cruise {
                accel_amp,
                accel_period,
                accel_phase,
                yaw_amp,
                yaw_period,
                yaw_phase,
            } => (
                accel_amp * (TAU * t / accel_period + accel_phase).sin(),
                yaw_amp * (TAU * t / yaw_period + yaw_phase).sin(),
            ),
            Control::Pulse { onset, ramp, hold, accel } => (accel * trapezoid(t, onset, ramp, hold), 0.0),
            Control::Weave { onset, duration, amplitude } => {
                let s = t - onset;
                if s <= 0.0 || s >= duration {
                    (0.0, 0.0)
                } else {
                    (0.0, amplitude * (TAU * s / duration).sin())
                }
            }
            Control::Turn { onset, ramp, hold, yaw_rate } => (0.0, yaw_rate * trapezoid(t, onset, ramp, hold)),
        }
    }
}

const MIN_SPEED: f64 = 0.5;
const SUBSTEPS: usize = 20;

/// Integrates a unicycle under `control` and samples positions every `dt`.
fn integrate(speed0: f64, control: Control, dt: f64, steps: usize) -> Vec<Vec2> {
    let mut pos = Vec2::ZERO;
    let mut speed = speed0;
    let mut heading = 0.0;
    let h = dt / SUBSTEPS as f64;
    let mut out = Vec::with_capacity(steps);
    out.push(pos);
    for k in 0..steps - 1 {
        for j in 0..SUBSTEPS {
            let t_mid = k as f64 * dt + (j as f64 + 0.5) * h;
            let (a, w) = control.at(t_mid);
            let heading_mid = heading + 0.5 * h * w;
            let speed_mid = (speed + 0.5 * h * a).max(MIN_SPEED);
            pos += Vec2::from_polar(h * speed_mid, heading_mid);
            heading += h * w;
            speed = (speed + h * a).max(MIN_SPEED);
        }
        out.push(pos);
    }
    out
}

fn maneuver_program(class: Maneuver, obs_span: f64, rng: &mut ChaCha8Rng) -> (f64, Control) {
    let onset = rng.gen_range(0.35..0.75) * obs_span;
    let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
    match class {
        Maneuver::Normal => (
            rng.gen_range(8.0..12.0),
            Control::Cruise {
                accel_amp: rng.gen_range(0.0..0.4),
                accel_period: rng.gen_range(4.0..8.0),
                accel_phase: rng.gen_range(0.0..TAU),
                yaw_amp: rng.gen_range(0.0..0.015),
                yaw_period: rng.gen_range(4.0..8.0),
                yaw_phase: rng.gen_range(0.0..TAU),
            },
        ),
        Maneuver::AbruptAcceleration => (
            rng.gen_range(5.0..9.0),
            Control::Pulse {
                onset,
                ramp: rng.gen_range(0.3..0.8),
                hold: rng.gen_range(2.0..4.0),
                accel: rng.gen_range(2.5..4.0),
            },
        ),
        Maneuver::AbruptDeceleration => (
            rng.gen_range(10.0..14.0),
            Control::Pulse {
                onset,
                ramp: rng.gen_range(0.3..0.8),
                hold: rng.gen_range(1.5..2.5),
                accel: -rng.gen_range(3.0..5.0),
            },
        ),
        Maneuver::LaneChange => {
            let speed = rng.gen_range(8.0..12.0);
            let duration = rng.gen_range(3.0..4.5);
            let lateral = rng.gen_range(3.0..4.0);
            let amplitude = sign * TAU * lateral / (speed * duration * duration);
            (speed, Control::Weave { onset, duration, amplitude })
        }
        Maneuver::HighCurvatureTurn => {
            let yaw_rate: f64 = rng.gen_range(0.25..0.45);
            let ramp: f64 = rng.gen_range(0.5..1.0);
            let sweep: f64 = rng.gen_range(1.2..1.6);
            let hold = (sweep / yaw_rate - ramp).max(0.0);
            (
                rng.gen_range(5.0..8.0),
                Control::Turn {
                    onset,
                    ramp,
                    hold,
                    yaw_rate: sign * yaw_rate,
                },
            )
        }
    }
}

fn generate_scene(cfg: &SynthConfig, index: usize) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);

    let class = draw_class(&cfg.class_weights, &mut rng);
    let steps = cfg.t_o + cfg.t_p;
    let obs_span = (cfg.t_o - 1) as f64 * cfg.dt;
    let (speed0, control) = maneuver_program(class, obs_span, &mut rng);
    let local = integrate(speed0, control, cfg.dt, steps);

    let origin = Vec2::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0));
    let rotation = rng.gen_range(-PI..PI);
    let target_pos: Vec<Vec2> = local.iter().map(|p| origin + p.rotate(rotation)).collect();

    let mut tracks = vec![Track::from_positions("ego", AgentKind::Vehicle, 0.0, cfg.dt, &target_pos)];
    let n_neighbors = rng.gen_range(1..=cfg.max_neighbors.max(1));
    for j in 0..n_neighbors {
        let (kind, positions) = place_neighbor(&target_pos, cfg.dt, &mut rng);
        tracks.push(Track::from_positions(format!("n{}", j + 1), kind, 0.0, cfg.dt, &positions));
    }

    Scene {
        scene_id: format!("scene-{index:06}"),
        dt: cfg.dt,
        t_o: cfg.t_o,
        t_p: cfg.t_p,
        target_id: "ego".into(),
        tracks,
        maneuver_label: Some(class.label()),
    }
}

/// A constant-velocity agent whose closest approach to the target happens at a
/// random time with a log-uniform miss distance, spreading InvTTC values.
fn place_neighbor(target: &[Vec2], dt: f64, rng: &mut ChaCha8Rng) -> (AgentKind, Vec<Vec2>) {
    let steps = target.len();
    let pedestrian = rng.gen_bool(0.25);
    let (kind, speed) = if pedestrian {
        (AgentKind::Pedestrian, rng.gen_range(0.8..1.8))
    } else {
        (AgentKind::Vehicle, rng.gen_range(4.0..12.0))
    };
    let mut miss = rng.gen_range(2f64.ln()..40f64.ln()).exp();
    for _ in 0..32 {
        let heading = rng.gen_range(-PI..PI);
        let vel = Vec2::from_polar(speed, heading);
        let side = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let k = rng.gen_range(0..steps);
        let anchor = target[k] + Vec2::from_polar(miss, heading + side * PI / 2.0);
        let positions: Vec<Vec2> = (0..steps)
            .map(|i| anchor + vel * ((i as f64 - k as f64) * dt))
            .collect();
        let clear = positions.iter().zip(target).all(|(p, q)| (*p - *q).norm() >= 1.0);
        if clear {
            return (kind, positions);
        }
        miss *= 1.25;
    }
    // Parked far off to the side.
    let offset = Vec2::new(500.0, 500.0);
    (kind, target.iter().map(|p| *p + offset).collect())
}

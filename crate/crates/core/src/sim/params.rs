//! Randomized session-level and action-level parameters.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::scene::SceneConfig;
use crate::geometry::Vec3;

/// Largest allowed |static − dynamic| friction difference.
pub const MAX_FRICTION_GAP: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mesh {
    Cube,
    Sphere,
    Capsule,
    Cylinder,
}

impl Mesh {
    pub const ALL: [Mesh; 4] = [Mesh::Cube, Mesh::Sphere, Mesh::Capsule, Mesh::Cylinder];

    /// Shapes that can roll on a surface (cylinders only while lying down).
    pub fn is_round(self) -> bool {
        matches!(self, Mesh::Sphere | Mesh::Cylinder)
    }
}

impl fmt::Display for Mesh {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mesh::Cube => "cube",
            Mesh::Sphere => "sphere",
            Mesh::Capsule => "capsule",
            Mesh::Cylinder => "cylinder",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionParams {
    /// Index into the scene's waypoint list.
    pub start_location: usize,
    /// Initial agent heading, degrees.
    pub start_rotation: f64,
    pub mesh: Mesh,
    /// Initial object location on the counter top.
    pub target_position: Vec3,
    /// Initial object yaw, degrees.
    pub target_rotation: f64,
    /// kg
    pub mass: f64,
    pub drag: f64,
    pub angular_drag: f64,
    pub dynamic_friction: f64,
    pub static_friction: f64,
    /// Fraction of normal velocity retained on impact.
    pub bounciness: f64,
}

/// Uniform draw from the open interval (lo, hi).
pub(crate) fn open_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    loop {
        let v = rng.random_range(lo..hi);
        if v > lo {
            return v;
        }
    }
}

pub const START_ROTATION_RANGE: (f64, f64) = (0.0, 360.0);
pub const TARGET_ROTATION_RANGE: (f64, f64) = (0.0, 360.0);
pub const MASS_RANGE: (f64, f64) = (0.1, 10.0);
pub const DRAG_RANGE: (f64, f64) = (0.0, 2.0);
pub const ANGULAR_DRAG_RANGE: (f64, f64) = (0.1, 1.0);
pub const FRICTION_RANGE: (f64, f64) = (0.0, 1.0);
pub const BOUNCINESS_RANGE: (f64, f64) = (0.0, 1.0);

pub const SPEED_RANGE: (f64, f64) = (1.0, 3.0);
pub const FORCE_RANGE: (f64, f64) = (25.0, 125.0);

/// Draws one session's parameters. Static friction is rejection-sampled
/// until it is within [`MAX_FRICTION_GAP`] of dynamic friction.
pub fn sample_session_params<R: Rng + ?Sized>(rng: &mut R, scene: &SceneConfig) -> SessionParams {
    let start_location = rng.random_range(0..scene.waypoints.len());
    let start_rotation = open_uniform(rng, START_ROTATION_RANGE.0, START_ROTATION_RANGE.1);
    let mesh = Mesh::ALL[rng.random_range(0..Mesh::ALL.len())];
    let target_position = scene.random_counter_point(rng, 0.15);
    let target_rotation = open_uniform(rng, TARGET_ROTATION_RANGE.0, TARGET_ROTATION_RANGE.1);
    let mass = open_uniform(rng, MASS_RANGE.0, MASS_RANGE.1);
    let drag = open_uniform(rng, DRAG_RANGE.0, DRAG_RANGE.1);
    let angular_drag = open_uniform(rng, ANGULAR_DRAG_RANGE.0, ANGULAR_DRAG_RANGE.1);
    let dynamic_friction = open_uniform(rng, FRICTION_RANGE.0, FRICTION_RANGE.1);
    let static_friction = loop {
        let s = open_uniform(rng, FRICTION_RANGE.0, FRICTION_RANGE.1);
        if (s - dynamic_friction).abs() <= MAX_FRICTION_GAP {
            break s;
        }
    };
    let bounciness = open_uniform(rng, BOUNCINESS_RANGE.0, BOUNCINESS_RANGE.1);
    SessionParams {
        start_location,
        start_rotation,
        mesh,
        target_position,
        target_rotation,
        mass,
        drag,
        angular_drag,
        dynamic_friction,
        static_friction,
        bounciness,
    }
}

/// Per-execution parameters; speeds in m/s, forces in newtons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionParams {
    pub pick_speed: f64,
    pub put_speed: f64,
    pub push_speed: f64,
    pub throw_force: f64,
    pub hit_force: f64,
}

pub fn sample_action_params<R: Rng + ?Sized>(rng: &mut R) -> ActionParams {
    ActionParams {
        pick_speed: open_uniform(rng, SPEED_RANGE.0, SPEED_RANGE.1),
        put_speed: open_uniform(rng, SPEED_RANGE.0, SPEED_RANGE.1),
        push_speed: open_uniform(rng, SPEED_RANGE.0, SPEED_RANGE.1),
        throw_force: open_uniform(rng, FORCE_RANGE.0, FORCE_RANGE.1),
        hit_force: open_uniform(rng, FORCE_RANGE.0, FORCE_RANGE.1),
    }
}

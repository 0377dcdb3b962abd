//! Static scene: room box, one counter, agent waypoints.
//!
//! Config files are TOML with these keys (all optional, unknown keys are
//! rejected):
//!
//! ```toml
//! counter_height = 0.9          # m, top surface of the counter
//! counter_min = [-1.0, 1.6]     # x, z of the counter footprint
//! counter_max = [1.0, 2.4]
//! room_min = [-3.0, 0.0, -3.0]  # x, y, z
//! room_max = [3.0, 3.0, 3.0]
//! hand_height = 1.0             # m, resting/carry height of the hand
//! gravity = 9.81                # m/s², acts along −Y
//! waypoints = [[-2.0, 0.0, -2.0], [2.0, 0.0, -2.0]]
//! ```

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub counter_height: f64,
    pub counter_min: [f64; 2],
    pub counter_max: [f64; 2],
    pub room_min: [f64; 3],
    pub room_max: [f64; 3],
    pub hand_height: f64,
    pub gravity: f64,
    pub waypoints: Vec<[f64; 3]>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            counter_height: 0.9,
            counter_min: [-1.0, 1.6],
            counter_max: [1.0, 2.4],
            room_min: [-3.0, 0.0, -3.0],
            room_max: [3.0, 3.0, 3.0],
            hand_height: 1.0,
            gravity: 9.81,
            waypoints: vec![
                [-2.0, 0.0, -2.0],
                [2.0, 0.0, -2.0],
                [0.0, 0.0, -0.5],
                [-2.2, 0.0, 0.8],
                [2.2, 0.0, 0.8],
                [0.0, 0.0, 1.1],
            ],
        }
    }
}

impl SceneConfig {
    pub fn from_toml_str(text: &str) -> Result<SceneConfig> {
        let scene: SceneConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn load(path: &Path) -> Result<SceneConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("scene: {m}")));
        if self.waypoints.len() < 2 {
            return bad("at least 2 waypoints are required");
        }
        if !(self.gravity > 0.0) {
            return bad("gravity must be positive");
        }
        for i in 0..3 {
            if !(self.room_min[i] < self.room_max[i]) {
                return bad("room_min must be below room_max on every axis");
            }
        }
        let inside_room = self.counter_min[0] > self.room_min[0]
            && self.counter_max[0] < self.room_max[0]
            && self.counter_min[1] > self.room_min[2]
            && self.counter_max[1] < self.room_max[2]
            && self.counter_min[0] < self.counter_max[0]
            && self.counter_min[1] < self.counter_max[1]
            && self.counter_height > self.room_min[1]
            && self.counter_height < self.room_max[1];
        if !inside_room {
            return bad("counter must lie inside the room");
        }
        if !(self.hand_height > self.counter_height && self.hand_height < self.room_max[1]) {
            return bad("hand_height must be above the counter and below the ceiling");
        }
        Ok(())
    }

    pub fn floor_height(&self) -> f64 {
        self.room_min[1]
    }

    /// Whether the horizontal position of `p` lies over the counter footprint.
    pub fn over_counter(&self, p: Vec3) -> bool {
        self.over_counter_margin(p, 0.0)
    }

    /// Footprint test with the footprint grown by `margin` on every side.
    pub fn over_counter_margin(&self, p: Vec3, margin: f64) -> bool {
        p.x >= self.counter_min[0] - margin
            && p.x <= self.counter_max[0] + margin
            && p.z >= self.counter_min[1] - margin
            && p.z <= self.counter_max[1] + margin
    }

    /// A point exactly on the counter top.
    pub fn on_counter(&self, p: Vec3) -> bool {
        self.over_counter(p) && (p.y - self.counter_height).abs() < 1e-9
    }

    pub fn waypoint(&self, i: usize) -> Vec3 {
        let w = self.waypoints[i % self.waypoints.len()];
        Vec3::new(w[0], w[1], w[2])
    }

    /// Uniform point on the counter top, at least `inset` from its edges.
    pub fn random_counter_point<R: Rng + ?Sized>(&self, rng: &mut R, inset: f64) -> Vec3 {
        let x = rng.random_range(self.counter_min[0] + inset..self.counter_max[0] - inset);
        let z = rng.random_range(self.counter_min[1] + inset..self.counter_max[1] - inset);
        Vec3::new(x, self.counter_height, z)
    }

    /// Clamps a horizontal position into the room, `margin` away from walls.
    pub fn clamp_to_room(&self, p: Vec3, margin: f64) -> Vec3 {
        Vec3::new(
            p.x.clamp(self.room_min[0] + margin, self.room_max[0] - margin),
            p.y,
            p.z.clamp(self.room_min[2] + margin, self.room_max[2] - margin),
        )
    }
}

//! Vectors and rotations.
//!
//! World axes: +Y is up (gravity acts along −Y), lengths are meters.
//! Quaternions are stored in XYZW order everywhere, matching the feature
//! column layout.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rotations whose angle exceeds `π − HALF_TURN_EPS` are reported as
/// ambiguous half turns by [`angular_velocity`].
pub const HALF_TURN_EPS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const UP: Vec3 = Vec3::new(0.0, 1.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Unit vector in the same direction, or `None` for (near) zero vectors.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        (n > 1e-12).then(|| self / n)
    }

    /// Horizontal (XZ) part of the vector.
    pub fn horizontal(self) -> Vec3 {
        Vec3::new(self.x, 0.0, self.z)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl SubAssign for Vec3 {
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Unit quaternion, XYZW storage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quat {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
}

impl Default for Quat {
    fn default() -> Self {
        Quat::IDENTITY
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat {
        x: 0.0,
        y: 0.0,
        z: 0.0,
        w: 1.0,
    };

    pub const fn new(x: f64, y: f64, z: f64, w: f64) -> Self {
        Quat { x, y, z, w }
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Quat {
        match axis.normalized() {
            Some(a) => {
                let (s, c) = (angle * 0.5).sin_cos();
                Quat::new(a.x * s, a.y * s, a.z * s, c)
            }
            None => Quat::IDENTITY,
        }
    }

    /// Exponential map: rotation by the rotation vector `v` (axis · angle).
    pub fn from_rotation_vector(v: Vec3) -> Quat {
        let angle = v.norm();
        if angle < 1e-15 {
            return Quat::IDENTITY;
        }
        Quat::from_axis_angle(v, angle)
    }

    /// Rotation about +Y by `degrees`.
    pub fn from_yaw_degrees(degrees: f64) -> Quat {
        Quat::from_axis_angle(Vec3::UP, degrees.to_radians())
    }

    pub fn vector(self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z + self.w * self.w).sqrt()
    }

    pub fn normalize(self) -> Quat {
        let n = self.norm();
        if n < 1e-300 || !n.is_finite() {
            return Quat::IDENTITY;
        }
        Quat::new(self.x / n, self.y / n, self.z / n, self.w / n)
    }

    pub fn conjugate(self) -> Quat {
        Quat::new(-self.x, -self.y, -self.z, self.w)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.w.is_finite()
    }

    /// Hamilton product `self ⊗ o` without renormalization.
    pub fn hamilton(self, o: Quat) -> Quat {
        let (a, b) = (self, o);
        Quat::new(
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        )
    }

    /// Rotates `v` by this (unit) quaternion.
    pub fn rotate(self, v: Vec3) -> Vec3 {
        let u = self.vector();
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    /// Shortest-arc rotation vector (axis · angle, angle in [0, π]).
    pub fn to_rotation_vector(self) -> Vec3 {
        let q = if self.w < 0.0 {
            Quat::new(-self.x, -self.y, -self.z, -self.w)
        } else {
            self
        };
        let s = q.vector().norm();
        if s < 1e-15 {
            // small-angle limit: angle ≈ 2·s, axis ≈ v/s
            return q.vector() * 2.0;
        }
        let angle = 2.0 * s.atan2(q.w);
        q.vector() * (angle / s)
    }

    /// Rotation angle in [0, π].
    pub fn angle(self) -> f64 {
        self.to_rotation_vector().norm()
    }

    /// Row-major rotation matrix.
    pub fn to_matrix(self) -> [[f64; 3]; 3] {
        let Quat { x, y, z, w } = self;
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - z * w),
                2.0 * (x * z + y * w),
            ],
            [
                2.0 * (x * y + z * w),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - x * w),
            ],
            [
                2.0 * (x * z - y * w),
                2.0 * (y * z + x * w),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.z, self.w]
    }
}

/// Hamilton product `a ⊗ b`, renormalized.
pub fn quat_multiply(a: Quat, b: Quat) -> Result<Quat> {
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::invalid("quaternion with non-finite component"));
    }
    Ok(a.hamilton(b).normalize())
}

/// Angular velocity (rad/s, world frame) that carries `q_prev` to `q_next`
/// in `dt` seconds, using the shortest arc of `q_next ⊗ q_prev⁻¹`.
///
/// Rotations within [`HALF_TURN_EPS`] of a half turn have an ambiguous
/// direction; they are logged, not folded.
pub fn angular_velocity(q_prev: Quat, q_next: Quat, dt: f64) -> Result<Vec3> {
    if dt <= 0.0 || !dt.is_finite() {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    if !q_prev.is_finite() || !q_next.is_finite() {
        return Err(Error::invalid("quaternion with non-finite component"));
    }
    let delta = q_next.hamilton(q_prev.conjugate());
    let rv = delta.to_rotation_vector();
    if rv.norm() > std::f64::consts::PI - HALF_TURN_EPS {
        log::warn!("frame-to-frame rotation of {:.4} rad is ambiguous", rv.norm());
    }
    Ok(rv / dt)
}

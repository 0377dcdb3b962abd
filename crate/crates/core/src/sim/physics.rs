//! Simplified rigid-body stepper.
//!
//! Plane-only collision (floor, counter top and sides, walls, ceiling) for
//! four analytic shapes, integrated with semi-implicit Euler at
//! [`SUBSTEPS`] substeps per 60 Hz frame. Impacts use time-of-impact
//! restitution on the normal component and a Coulomb-limited tangential
//! impulse. In resting contact:
//!
//! * spheres, and cylinders lying on their side, roll: friction drives the
//!   contact-point slip `v + ω × r_c` to zero within the Coulomb limit;
//! * cubes, capsules and upright cylinders slide under Coulomb friction,
//!   settle onto their nearest stable face, and tumble over their leading
//!   edge when off-center friction torque exceeds [`TRIP_RATIO`].
//!
//! Tumbling is an inverted pendulum about the pivot edge, integrated so
//! that its mechanical energy never grows. Every frame ends with an energy
//! projection: if the free body gained mechanical energy through
//! discretization, the excess is removed from its kinetic energy.

use serde::{Deserialize, Serialize};

use super::params::{Mesh, SessionParams};
use super::scene::SceneConfig;
use crate::error::{Error, Result};
use crate::geometry::{Quat, Vec3};

pub const SUBSTEPS: usize = 8;

pub const CUBE_HALF: f64 = 0.1;
pub const SPHERE_RADIUS: f64 = 0.1;
pub const CAPSULE_RADIUS: f64 = 0.07;
pub const CAPSULE_HALF_LENGTH: f64 = 0.1;
pub const CYLINDER_RADIUS: f64 = 0.09;
pub const CYLINDER_HALF_HEIGHT: f64 = 0.12;

/// Impacts slower than this do not bounce.
pub const REST_SPEED: f64 = 0.25;
/// Rolling resistance coefficient (deceleration = C · g).
pub const ROLLING_RESISTANCE: f64 = 0.04;
/// Minimum sliding speed for an edge trip.
pub const TRIP_SPEED: f64 = 0.5;
/// An edge trip needs `μ_d · a_h ≥ TRIP_RATIO · a_w`.
pub const TRIP_RATIO: f64 = 0.4;
/// Cylinders with |axis·up| below this lie on their side.
pub const LYING_AXIS_Y: f64 = 0.2;

const CONTACT_EPS: f64 = 1e-9;
const SETTLE_EPS: f64 = 1e-4;
const SETTLE_ARM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Contact {
    Air,
    Ground,
    Counter,
    Held,
}

impl Contact {
    pub fn is_surface(self) -> bool {
        matches!(self, Contact::Ground | Contact::Counter)
    }
}

/// Edge pivot of a tumbling body.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pivot {
    /// Pivot edge point on the support surface.
    pub point: Vec3,
    /// Horizontal unit direction of travel.
    pub dir: Vec3,
    /// Orientation when the tumble began.
    pub rot0: Quat,
    /// Rotation about `ŷ × dir` so far, radians in [0, π/2].
    pub angle: f64,
    /// d(angle)/dt
    pub rate: f64,
    /// Distance from pivot to center of mass.
    pub arm: f64,
    /// Initial angle of the center from vertical, measured behind the pivot.
    pub theta0: f64,
    /// Moment of inertia about the pivot edge.
    pub inertia: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicsState {
    pub pos: Vec3,
    pub vel: Vec3,
    pub rot: Quat,
    pub ang_vel: Vec3,
    pub contact: Contact,
    pub pivot: Option<Pivot>,
}

impl PhysicsState {
    pub fn at_rest(pos: Vec3, rot: Quat, contact: Contact) -> Self {
        PhysicsState {
            pos,
            vel: Vec3::ZERO,
            rot,
            ang_vel: Vec3::ZERO,
            contact,
            pivot: None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.pos.is_finite() && self.vel.is_finite() && self.rot.is_finite() && self.ang_vel.is_finite()
    }
}

/// Physical constants of the simulated object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Body {
    pub mesh: Mesh,
    pub mass: f64,
    pub drag: f64,
    pub angular_drag: f64,
    pub dynamic_friction: f64,
    pub static_friction: f64,
    pub bounciness: f64,
}

impl From<&SessionParams> for Body {
    fn from(p: &SessionParams) -> Self {
        Body {
            mesh: p.mesh,
            mass: p.mass,
            drag: p.drag,
            angular_drag: p.angular_drag,
            dynamic_friction: p.dynamic_friction,
            static_friction: p.static_friction,
            bounciness: p.bounciness,
        }
    }
}

impl Body {
    /// Body-frame principal moments; the symmetry axis is body +Y.
    pub fn principal_inertia(&self) -> Vec3 {
        let m = self.mass;
        match self.mesh {
            Mesh::Cube => {
                let i = m * (2.0 * CUBE_HALF).powi(2) / 6.0;
                Vec3::new(i, i, i)
            }
            Mesh::Sphere => {
                let i = 0.4 * m * SPHERE_RADIUS * SPHERE_RADIUS;
                Vec3::new(i, i, i)
            }
            Mesh::Capsule => {
                let (r, l) = (CAPSULE_RADIUS, 2.0 * (CAPSULE_HALF_LENGTH + CAPSULE_RADIUS));
                let side = m * (3.0 * r * r + l * l) / 12.0;
                Vec3::new(side, 0.5 * m * r * r, side)
            }
            Mesh::Cylinder => {
                let (r, l) = (CYLINDER_RADIUS, 2.0 * CYLINDER_HALF_HEIGHT);
                let side = m * (3.0 * r * r + l * l) / 12.0;
                Vec3::new(side, 0.5 * m * r * r, side)
            }
        }
    }

    /// World-frame inertia applied to `w`: R · I · Rᵀ · w.
    pub fn inertia_times(&self, rot: Quat, w: Vec3) -> Vec3 {
        let local = rot.conjugate().rotate(w);
        let i = self.principal_inertia();
        rot.rotate(Vec3::new(local.x * i.x, local.y * i.y, local.z * i.z))
    }

    pub fn inertia_about(&self, rot: Quat, axis: Vec3) -> f64 {
        axis.dot(self.inertia_times(rot, axis))
    }
}

/// Depth of the lowest point of the shape below its center.
pub fn support_depth(mesh: Mesh, rot: Quat) -> f64 {
    match mesh {
        Mesh::Sphere => SPHERE_RADIUS,
        Mesh::Cube => {
            let m = rot.to_matrix();
            CUBE_HALF * (m[1][0].abs() + m[1][1].abs() + m[1][2].abs())
        }
        Mesh::Capsule => {
            let uy = symmetry_axis(rot).y;
            CAPSULE_HALF_LENGTH * uy.abs() + CAPSULE_RADIUS
        }
        Mesh::Cylinder => {
            let uy = symmetry_axis(rot).y.clamp(-1.0, 1.0);
            CYLINDER_HALF_HEIGHT * uy.abs() + CYLINDER_RADIUS * (1.0 - uy * uy).sqrt()
        }
    }
}

/// Radius of the bounding sphere.
pub fn bounding_radius(mesh: Mesh) -> f64 {
    match mesh {
        Mesh::Sphere => SPHERE_RADIUS,
        Mesh::Cube => CUBE_HALF * 3f64.sqrt(),
        Mesh::Capsule => CAPSULE_HALF_LENGTH + CAPSULE_RADIUS,
        Mesh::Cylinder => CYLINDER_RADIUS.hypot(CYLINDER_HALF_HEIGHT),
    }
}

/// Radius of the rolling cross-section for round shapes.
pub fn rolling_radius(mesh: Mesh) -> Option<f64> {
    match mesh {
        Mesh::Sphere => Some(SPHERE_RADIUS),
        Mesh::Cylinder => Some(CYLINDER_RADIUS),
        _ => None,
    }
}

/// Body +Y axis in world coordinates.
pub fn symmetry_axis(rot: Quat) -> Vec3 {
    rot.rotate(Vec3::UP)
}

/// Whether the body can currently roll on a horizontal surface.
pub fn rolls_in(mesh: Mesh, rot: Quat) -> bool {
    match mesh {
        Mesh::Sphere => true,
        Mesh::Cylinder => symmetry_axis(rot).y.abs() < LYING_AXIS_Y,
        _ => false,
    }
}

/// Rotation (horizontal world axis, angle) that brings the body onto its
/// nearest stable resting orientation; `None` for spheres.
pub fn stable_alignment(mesh: Mesh, rot: Quat) -> Option<(Vec3, f64)> {
    let align = |from: Vec3, to: Vec3| -> (Vec3, f64) {
        let angle = from.dot(to).clamp(-1.0, 1.0).acos();
        let axis = from.cross(to).normalized().unwrap_or(Vec3::new(1.0, 0.0, 0.0));
        (axis, angle)
    };
    let lying = |u: Vec3| {
        let h = u.horizontal().normalized().unwrap_or(Vec3::new(1.0, 0.0, 0.0));
        align(u, h)
    };
    let upright = |u: Vec3| {
        let s = if u.y >= 0.0 { u } else { -u };
        align(s, Vec3::UP)
    };
    match mesh {
        Mesh::Sphere => None,
        Mesh::Cube => {
            let axes = [
                rot.rotate(Vec3::new(1.0, 0.0, 0.0)),
                rot.rotate(Vec3::UP),
                rot.rotate(Vec3::new(0.0, 0.0, 1.0)),
            ];
            let best = axes
                .into_iter()
                .max_by(|a, b| a.y.abs().total_cmp(&b.y.abs()))
                .expect("three axes");
            Some(upright(best))
        }
        Mesh::Capsule => Some(lying(symmetry_axis(rot))),
        Mesh::Cylinder => {
            let u = symmetry_axis(rot);
            // the support depth peaks at this tilt; fall toward whichever side it is on
            if u.y.abs() >= CYLINDER_HALF_HEIGHT / CYLINDER_RADIUS.hypot(CYLINDER_HALF_HEIGHT) {
                Some(upright(u))
            } else {
                Some(lying(u))
            }
        }
    }
}

/// Half-width from center to leading edge and height of the center above
/// the surface, for edge-pivot tumbling.
fn tumble_extents(mesh: Mesh) -> Option<(f64, f64)> {
    match mesh {
        Mesh::Cube => Some((CUBE_HALF, CUBE_HALF)),
        Mesh::Capsule => Some((CAPSULE_RADIUS, CAPSULE_RADIUS)),
        Mesh::Cylinder => Some((CYLINDER_RADIUS, CYLINDER_HALF_HEIGHT)),
        Mesh::Sphere => None,
    }
}

pub fn kinetic_energy(s: &PhysicsState, body: &Body) -> f64 {
    0.5 * body.mass * s.vel.norm_sq() + 0.5 * s.ang_vel.dot(body.inertia_times(s.rot, s.ang_vel))
}

/// Kinetic plus gravitational potential energy (zero at the floor), J.
pub fn mechanical_energy(s: &PhysicsState, body: &Body, scene: &SceneConfig) -> f64 {
    kinetic_energy(s, body) + body.mass * scene.gravity * (s.pos.y - scene.floor_height())
}

/// Advances a free body by `dt`. Held bodies are moved kinematically by the
/// agent and are returned unchanged.
///
/// `frame` only labels integration errors.
pub fn step_physics(
    s: &PhysicsState,
    params: &SessionParams,
    scene: &SceneConfig,
    dt: f64,
    frame: usize,
) -> Result<PhysicsState> {
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    step_body(s, &Body::from(params), scene, dt, frame)
}

pub fn step_body(s: &PhysicsState, body: &Body, scene: &SceneConfig, dt: f64, frame: usize) -> Result<PhysicsState> {
    if s.contact == Contact::Held {
        return Ok(*s);
    }
    let e0 = mechanical_energy(s, body, scene);
    let mut next = *s;
    let h = dt / SUBSTEPS as f64;
    for _ in 0..SUBSTEPS {
        if next.pivot.is_some() {
            pivot_substep(&mut next, body, scene, h);
        } else {
            free_substep(&mut next, body, scene, h);
        }
    }
    project_energy(&mut next, body, scene, e0);
    if !next.is_finite() {
        return Err(Error::Integration { frame, seed: 0 });
    }
    Ok(next)
}

fn project_energy(s: &mut PhysicsState, body: &Body, scene: &SceneConfig, e0: f64) {
    let e1 = mechanical_energy(s, body, scene);
    if e1 <= e0 {
        return;
    }
    let excess = e1 - e0;
    let ke = kinetic_energy(s, body);
    let factor = if ke > excess { ((ke - excess) / ke).sqrt() } else { 0.0 };
    s.vel = s.vel * factor;
    s.ang_vel = s.ang_vel * factor;
    if let Some(p) = s.pivot.as_mut() {
        p.rate *= factor;
    }
}

/// Support surface below `pos`: the counter top if the body is over the
/// counter and was not already below its top, otherwise the floor.
fn support_surface(scene: &SceneConfig, pos: Vec3, prev_bottom: f64) -> (f64, Contact) {
    if scene.over_counter(pos) && prev_bottom >= scene.counter_height - 1e-3 {
        (scene.counter_height, Contact::Counter)
    } else {
        (scene.floor_height(), Contact::Ground)
    }
}

fn free_substep(s: &mut PhysicsState, body: &Body, scene: &SceneConfig, h: f64) {
    let g = scene.gravity;
    let prev_bottom = s.pos.y - support_depth(body.mesh, s.rot);

    s.vel.y -= g * h;
    s.vel = s.vel * (1.0 - body.drag * h).max(0.0);
    s.ang_vel = s.ang_vel * (1.0 - body.angular_drag * h).max(0.0);
    s.pos += s.vel * h;
    s.rot = Quat::from_rotation_vector(s.ang_vel * h).hamilton(s.rot).normalize();

    collide_walls(s, body, scene);
    collide_counter_sides(s, body, scene);

    let (surface, kind) = support_surface(scene, s.pos, prev_bottom);
    let depth = support_depth(body.mesh, s.rot);
    if s.pos.y - depth > surface + CONTACT_EPS {
        s.contact = Contact::Air;
        return;
    }
    let vy = s.vel.y;
    if vy < -REST_SPEED {
        let descent = (prev_bottom - surface).max(0.0);
        let tau = (descent / -vy).min(h);
        let rebound = -body.bounciness * vy;
        s.pos.y = surface + depth + rebound * (h - tau);
        s.vel.y = rebound;
        impact_friction(s, body, (1.0 + body.bounciness) * -vy);
        s.contact = if rebound * (h - tau) > CONTACT_EPS {
            Contact::Air
        } else {
            kind
        };
    } else {
        s.pos.y = surface + depth;
        s.vel.y = s.vel.y.max(0.0);
        s.contact = kind;
        resting_contact(s, body, scene, h, surface);
    }
}

fn collide_walls(s: &mut PhysicsState, body: &Body, scene: &SceneConfig) {
    let r = bounding_radius(body.mesh);
    let e = body.bounciness;
    let (lo, hi) = (scene.room_min, scene.room_max);
    if s.pos.x - r < lo[0] {
        s.pos.x = lo[0] + r;
        s.vel.x = e * s.vel.x.abs();
    } else if s.pos.x + r > hi[0] {
        s.pos.x = hi[0] - r;
        s.vel.x = -e * s.vel.x.abs();
    }
    if s.pos.z - r < lo[2] {
        s.pos.z = lo[2] + r;
        s.vel.z = e * s.vel.z.abs();
    } else if s.pos.z + r > hi[2] {
        s.pos.z = hi[2] - r;
        s.vel.z = -e * s.vel.z.abs();
    }
    if s.pos.y + r > hi[1] {
        s.pos.y = hi[1] - r;
        s.vel.y = -e * s.vel.y.abs();
    }
}

fn collide_counter_sides(s: &mut PhysicsState, body: &Body, scene: &SceneConfig) {
    let r = bounding_radius(body.mesh);
    let bottom = s.pos.y - support_depth(body.mesh, s.rot);
    if bottom >= scene.counter_height - 1e-3 || !scene.over_counter_margin(s.pos, r) {
        return;
    }
    let e = body.bounciness;
    let (c0, c1) = (scene.counter_min, scene.counter_max);
    // penetration depth to exit through each side: -x, +x, -z, +z
    let exits = [
        s.pos.x - (c0[0] - r),
        (c1[0] + r) - s.pos.x,
        s.pos.z - (c0[1] - r),
        (c1[1] + r) - s.pos.z,
    ];
    let (side, _) = exits
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("four sides");
    match side {
        0 => {
            s.pos.x = c0[0] - r;
            if s.vel.x > 0.0 {
                s.vel.x *= -e;
            }
        }
        1 => {
            s.pos.x = c1[0] + r;
            if s.vel.x < 0.0 {
                s.vel.x *= -e;
            }
        }
        2 => {
            s.pos.z = c0[1] - r;
            if s.vel.z > 0.0 {
                s.vel.z *= -e;
            }
        }
        _ => {
            s.pos.z = c1[1] + r;
            if s.vel.z < 0.0 {
                s.vel.z *= -e;
            }
        }
    }
}

/// Coulomb-limited tangential impulse at an impact with normal speed change
/// `dvn`.
fn impact_friction(s: &mut PhysicsState, body: &Body, dvn: f64) {
    let limit = body.dynamic_friction * dvn;
    if rolls_in(body.mesh, s.rot) {
        roll_coupling(s, body, limit, limit);
    } else {
        slide_friction(s, limit, 0.0);
    }
}

fn resting_contact(s: &mut PhysicsState, body: &Body, scene: &SceneConfig, h: f64, surface: f64) {
    let g = scene.gravity;
    let spin_decel = body.dynamic_friction * g * h / (0.5 * bounding_radius(body.mesh));
    let spin = s.ang_vel.y;
    let spin = spin.signum() * (spin.abs() - spin_decel).max(0.0);

    if rolls_in(body.mesh, s.rot) {
        if body.mesh == Mesh::Cylinder {
            settle(s, body, surface, g, h);
        }
        roll_coupling(s, body, body.static_friction * g * h, body.dynamic_friction * g * h);
        rolling_resistance(s, body, ROLLING_RESISTANCE * g * h);
        s.ang_vel.y = spin;
        return;
    }

    slide_friction(s, body.dynamic_friction * g * h, body.static_friction * g * h);
    s.ang_vel = Vec3::new(s.ang_vel.x, spin, s.ang_vel.z);
    let settled = settle(s, body, surface, g, h);
    if settled {
        try_trip(s, body, surface);
    }
}

/// Decelerates horizontal velocity by `decel`; speeds at or below
/// `stick` are cancelled outright (static regime).
fn slide_friction(s: &mut PhysicsState, decel: f64, stick: f64) {
    let vh = s.vel.horizontal();
    let speed = vh.norm();
    if speed <= stick || speed <= decel {
        s.vel.x = 0.0;
        s.vel.z = 0.0;
    } else {
        let k = 1.0 - decel / speed;
        s.vel.x *= k;
        s.vel.z *= k;
    }
}

/// Friction impulse driving contact-point slip toward zero. `static_limit`
/// and `dynamic_limit` bound the velocity change per unit mass.
fn roll_coupling(s: &mut PhysicsState, body: &Body, static_limit: f64, dynamic_limit: f64) {
    let m = body.mass;
    match body.mesh {
        Mesh::Sphere => {
            let r = SPHERE_RADIUS;
            let inertia = body.principal_inertia().x;
            let k = 1.0 / m + r * r / inertia;
            let slip = Vec3::new(s.vel.x + r * s.ang_vel.z, 0.0, s.vel.z - r * s.ang_vel.x);
            let mut j = slip * (-1.0 / k);
            let jn = j.norm();
            if jn > static_limit * m {
                j = j * (dynamic_limit * m / jn);
            }
            s.vel += j / m;
            s.ang_vel += Vec3::new(-r * j.z, 0.0, r * j.x) / inertia;
        }
        Mesh::Cylinder => {
            let r = CYLINDER_RADIUS;
            let u = symmetry_axis(s.rot)
                .horizontal()
                .normalized()
                .unwrap_or(Vec3::new(1.0, 0.0, 0.0));
            let p = Vec3::UP.cross(u);
            let inertia = body.principal_inertia().y;
            let k = 1.0 / m + r * r / inertia;
            let w_roll = s.ang_vel.dot(u);
            let slip = s.vel.dot(p) + r * w_roll;
            let mut j = -slip / k;
            if j.abs() > static_limit * m {
                j = j.signum() * dynamic_limit * m;
            }
            s.vel += p * (j / m);
            let w_roll = w_roll + r * j / inertia;
            // axial sliding
            let va = s.vel.dot(u);
            let va_new = va.signum() * (va.abs() - dynamic_limit).max(0.0);
            s.vel += u * (va_new - va);
            s.ang_vel = u * w_roll + Vec3::UP * s.ang_vel.y;
        }
        _ => {}
    }
}

fn rolling_resistance(s: &mut PhysicsState, body: &Body, decel: f64) {
    let speed = s.vel.horizontal().norm();
    let k = if speed > decel { 1.0 - decel / speed } else { 0.0 };
    s.vel.x *= k;
    s.vel.z *= k;
    match body.mesh {
        Mesh::Sphere => {
            s.ang_vel.x *= k;
            s.ang_vel.z *= k;
        }
        _ => {
            let u = symmetry_axis(s.rot)
                .horizontal()
                .normalized()
                .unwrap_or(Vec3::new(1.0, 0.0, 0.0));
            let w = s.ang_vel.dot(u);
            s.ang_vel += u * (w * k - w);
        }
    }
}

/// Rotates toward the nearest stable orientation with gravity-driven
/// angular speed. Returns true once the body is resting stably.
fn settle(s: &mut PhysicsState, body: &Body, surface: f64, g: f64, h: f64) -> bool {
    let Some((axis, angle)) = stable_alignment(body.mesh, s.rot) else {
        return true;
    };
    let yaw = s.ang_vel.y;
    if angle <= SETTLE_EPS {
        s.rot = Quat::from_axis_angle(axis, angle).hamilton(s.rot).normalize();
        s.ang_vel = if rolls_in(body.mesh, s.rot) {
            s.ang_vel
        } else {
            Vec3::UP * yaw
        };
        s.pos.y = surface + support_depth(body.mesh, s.rot);
        return true;
    }
    let rate = s.ang_vel.dot(axis).max(0.0) + g / SETTLE_ARM * angle.sin().max(0.05) * h;
    let step = (rate * h).min(angle);
    s.rot = Quat::from_axis_angle(axis, step).hamilton(s.rot).normalize();
    s.pos.y = surface + support_depth(body.mesh, s.rot);
    let done = step >= angle;
    let tilt_rate = if done { 0.0 } else { rate };
    s.ang_vel = if rolls_in(body.mesh, s.rot) {
        let u = symmetry_axis(s.rot)
            .horizontal()
            .normalized()
            .unwrap_or(Vec3::new(1.0, 0.0, 0.0));
        u * s.ang_vel.dot(u) + axis * tilt_rate + Vec3::UP * yaw
    } else {
        axis * tilt_rate + Vec3::UP * yaw
    };
    done
}

/// Starts an edge-pivot tumble when off-center friction torque is large
/// enough and the body slides fast enough.
fn try_trip(s: &mut PhysicsState, body: &Body, surface: f64) {
    let Some((half_w, half_h)) = tumble_extents(body.mesh) else {
        return;
    };
    if body.dynamic_friction * half_h < TRIP_RATIO * half_w {
        return;
    }
    let vh = s.vel.horizontal();
    let speed = vh.norm();
    if speed < TRIP_SPEED {
        return;
    }
    let dir = vh / speed;
    let axis = Vec3::UP.cross(dir);
    // only tumbles that land no higher than the current resting height
    let landed = Quat::from_axis_angle(axis, std::f64::consts::FRAC_PI_2).hamilton(s.rot);
    if support_depth(body.mesh, landed) > support_depth(body.mesh, s.rot) + 1e-9 {
        return;
    }
    let arm = half_w.hypot(half_h);
    let i_cm = body.inertia_about(s.rot, axis);
    let inertia = i_cm + body.mass * arm * arm;
    // angular momentum about the pivot edge is conserved through the trip
    let momentum = body.mass * speed * half_h + i_cm * s.ang_vel.dot(axis);
    let mut pivot = Pivot {
        point: Vec3::new(s.pos.x, surface, s.pos.z) + dir * half_w,
        dir,
        rot0: s.rot,
        angle: 0.0,
        rate: momentum / inertia,
        arm,
        theta0: half_w.atan2(half_h),
        inertia,
    };
    pivot.rate = pivot.rate.max(0.0);
    s.pivot = Some(pivot);
    apply_pivot(s, &pivot);
}

fn apply_pivot(s: &mut PhysicsState, p: &Pivot) {
    let axis = Vec3::UP.cross(p.dir);
    let theta = p.theta0 - p.angle;
    let offset = p.dir * (-p.arm * theta.sin()) + Vec3::UP * (p.arm * theta.cos());
    s.pos = p.point + offset;
    s.rot = Quat::from_axis_angle(axis, p.angle).hamilton(p.rot0).normalize();
    s.ang_vel = axis * p.rate;
    s.vel = axis.cross(offset) * p.rate;
}

fn pivot_substep(s: &mut PhysicsState, body: &Body, scene: &SceneConfig, h: f64) {
    let mut p = s.pivot.expect("pivot_substep needs a pivot");
    let g = scene.gravity;
    let m = body.mass;
    let potential = |angle: f64| m * g * p.arm * (p.theta0 - angle).cos();

    p.rate *= (1.0 - body.angular_drag * h).max(0.0);
    let energy = 0.5 * p.inertia * p.rate * p.rate + potential(p.angle);
    let accel = -m * g * p.arm * (p.theta0 - p.angle).sin() / p.inertia;
    let rate = p.rate + accel * h;
    let angle = p.angle + rate * h;
    let ke = energy - potential(angle);
    if ke < 0.0 {
        // turning point
        p.rate = 0.0;
    } else {
        p.angle = angle;
        p.rate = rate.signum() * (2.0 * ke / p.inertia).sqrt();
    }

    let quarter = std::f64::consts::FRAC_PI_2;
    if p.angle >= quarter {
        p.angle = quarter;
        apply_pivot(s, &p);
        // the landing face absorbs the vertical part of the pivot motion
        s.vel = s.vel.horizontal();
        s.ang_vel = Vec3::ZERO;
        s.pivot = None;
    } else if p.angle <= 0.0 {
        p.angle = 0.0;
        apply_pivot(s, &p);
        s.vel = Vec3::ZERO;
        s.ang_vel = Vec3::ZERO;
        s.pivot = None;
    } else {
        apply_pivot(s, &p);
        s.pivot = Some(p);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::FRAME_DT;

    pub(crate) fn body(mesh: Mesh, e: f64) -> Body {
        Body {
            mesh,
            mass: 1.0,
            drag: 0.0,
            angular_drag: 0.1,
            dynamic_friction: 0.5,
            static_friction: 0.6,
            bounciness: e,
        }
    }

    fn run(s: &PhysicsState, b: &Body, scene: &SceneConfig, frames: usize) -> Vec<PhysicsState> {
        let mut out = vec![*s];
        let mut cur = *s;
        for f in 0..frames {
            cur = step_body(&cur, b, scene, FRAME_DT, f).unwrap();
            out.push(cur);
        }
        out
    }

    #[test]
    fn free_fall_single_step() {
        let scene = SceneConfig::default();
        let b = body(Mesh::Cube, 0.5);
        let s = PhysicsState::at_rest(Vec3::new(0.0, 2.0, -1.0), Quat::IDENTITY, Contact::Air);
        let n = step_body(&s, &b, &scene, FRAME_DT, 0).unwrap();
        assert!((n.vel.y + 9.81 * FRAME_DT).abs() < 1e-12, "{}", n.vel.y);
        assert_eq!(n.contact, Contact::Air);
    }

    #[test]
    fn resting_body_is_a_fixed_point() {
        let scene = SceneConfig::default();
        for mesh in Mesh::ALL {
            let b = body(mesh, 0.5);
            let rot = match mesh {
                Mesh::Capsule => Quat::from_axis_angle(Vec3::new(1.0, 0.0, 0.0), std::f64::consts::FRAC_PI_2),
                _ => Quat::from_yaw_degrees(30.0),
            };
            let pos = Vec3::new(0.3, support_depth(mesh, rot), -1.0);
            let s = PhysicsState::at_rest(pos, rot, Contact::Ground);
            let n = step_body(&s, &b, &scene, FRAME_DT, 0).unwrap();
            assert_eq!(n, s, "{mesh}");
        }
    }

    #[test]
    fn airborne_horizontal_velocity_is_constant() {
        let scene = SceneConfig::default();
        let b = body(Mesh::Capsule, 0.5);
        let mut s = PhysicsState::at_rest(Vec3::new(0.0, 2.5, -1.0), Quat::IDENTITY, Contact::Air);
        s.vel = Vec3::new(0.7, 1.0, -0.4);
        s.ang_vel = Vec3::new(3.0, 1.0, -2.0);
        let mut prev = s;
        for f in 0..20 {
            let n = step_body(&prev, &b, &scene, FRAME_DT, f).unwrap();
            assert_eq!(n.contact, Contact::Air);
            assert!((n.vel.x - prev.vel.x).abs() < 1e-9);
            assert!((n.vel.z - prev.vel.z).abs() < 1e-9);
            prev = n;
        }
    }

    #[test]
    fn pushed_sphere_rolls_and_cube_slides() {
        let scene = SceneConfig::default();
        let b = body(Mesh::Sphere, 0.3);
        let mut s = PhysicsState::at_rest(Vec3::new(-2.0, SPHERE_RADIUS, -1.0), Quat::IDENTITY, Contact::Ground);
        s.vel = Vec3::new(2.0, 0.0, 0.0);
        let trace = run(&s, &b, &scene, 30);
        let last = trace.last().unwrap();
        let slip = last.vel.x + SPHERE_RADIUS * last.ang_vel.z;
        assert!(slip.abs() < 1e-9, "slip {slip}");
        assert!(last.vel.x > 0.5);

        let mut b = body(Mesh::Cube, 0.3);
        b.dynamic_friction = 0.1;
        b.static_friction = 0.15;
        let mut s = PhysicsState::at_rest(Vec3::new(-2.0, CUBE_HALF, -1.0), Quat::IDENTITY, Contact::Ground);
        s.vel = Vec3::new(2.0, 0.0, 0.0);
        let trace = run(&s, &b, &scene, 30);
        for st in &trace {
            assert_eq!(st.rot, Quat::IDENTITY);
        }
        assert!(trace.last().unwrap().vel.x > 1.0);
    }

    #[test]
    fn fast_high_friction_cube_tumbles() {
        let scene = SceneConfig::default();
        let mut b = body(Mesh::Cube, 0.3);
        b.dynamic_friction = 0.8;
        b.static_friction = 0.9;
        let mut s = PhysicsState::at_rest(Vec3::new(-2.0, CUBE_HALF, -1.0), Quat::IDENTITY, Contact::Ground);
        s.vel = Vec3::new(3.0, 0.0, 0.0);
        let trace = run(&s, &b, &scene, 60);
        assert!(trace.iter().any(|t| t.pivot.is_some()));
        let last = trace.last().unwrap();
        assert!(last.pivot.is_none());
        assert!(last.rot.angle() > 1.0, "cube should have turned over");
        assert!((last.pos.y - CUBE_HALF).abs() < 1e-6);
    }

    #[test]
    fn tilted_cube_settles_face_down() {
        let scene = SceneConfig::default();
        let b = body(Mesh::Cube, 0.3);
        let rot = Quat::from_axis_angle(Vec3::new(0.0, 0.0, 1.0), 0.3);
        let s = PhysicsState::at_rest(
            Vec3::new(0.0, support_depth(Mesh::Cube, rot), -1.0),
            rot,
            Contact::Ground,
        );
        let trace = run(&s, &b, &scene, 60);
        let last = trace.last().unwrap();
        assert!(stable_alignment(Mesh::Cube, last.rot).unwrap().1 < 1e-9);
        assert!((last.pos.y - CUBE_HALF).abs() < 1e-9);
    }

    #[test]
    fn energy_never_increases_for_free_bodies() {
        let scene = SceneConfig::default();
        for mesh in Mesh::ALL {
            let b = body(mesh, 0.8);
            let mut s = PhysicsState::at_rest(Vec3::new(0.0, 2.0, 0.0), Quat::from_yaw_degrees(10.0), Contact::Air);
            s.vel = Vec3::new(3.0, 2.0, 1.5);
            s.ang_vel = Vec3::new(4.0, -2.0, 6.0);
            let trace = run(&s, &b, &scene, 600);
            for w in trace.windows(2) {
                let (e0, e1) = (
                    mechanical_energy(&w[0], &b, &scene),
                    mechanical_energy(&w[1], &b, &scene),
                );
                assert!(e1 <= e0 + 1e-9, "{mesh}: {e0} -> {e1}");
            }
        }
    }

    #[test]
    fn non_finite_state_is_an_integration_error() {
        let scene = SceneConfig::default();
        let b = body(Mesh::Cube, 0.5);
        let mut s = PhysicsState::at_rest(Vec3::new(0.0, 2.0, 0.0), Quat::IDENTITY, Contact::Air);
        s.vel = Vec3::new(f64::NAN, 0.0, 0.0);
        match step_body(&s, &b, &scene, FRAME_DT, 17) {
            Err(Error::Integration { frame, .. }) => assert_eq!(frame, 17),
            other => panic!("expected integration error, got {other:?}"),
        }
    }
}

//! Scripted agent executing action primitives, and session generation.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::markov::{next_primitive, MarkovState};
use super::params::{sample_action_params, sample_session_params, ActionParams, SessionParams};
use super::physics::{bounding_radius, step_body, support_depth, Body, Contact, PhysicsState};
use super::scene::SceneConfig;
use crate::error::{Error, Result};
use crate::geometry::{Quat, Vec3};
use crate::trajectory::{Frame, Primitive, PrimitiveEvent, Session, FRAME_DT, SESSION_FRAMES};

/// Object center relative to the hand while held.
pub const GRIP_OFFSET: Vec3 = Vec3 {
    x: 0.0,
    y: -0.12,
    z: 0.0,
};
/// Extra hand height while carrying.
pub const CARRY_LIFT: f64 = 0.35;
/// Longest wait for the object to come to rest after an action, seconds.
pub const MAX_SETTLE_SECONDS: f64 = 6.0;
const IDLE_SECONDS: (f64, f64) = (0.5, 2.0);
const PUSH_CONTACT_FRAMES: usize = 8;
const FOLLOW_THROUGH_FRAMES: usize = 6;
const SWING_FRAMES: usize = 12;
const MAX_SPIN: f64 = 12.0;
const SLEEP_SPEED: f64 = 1e-6;
const RETRACT_SPEED: f64 = 1.0;

/// Per-frame physics state plus whether the agent acted on the object
/// during the step that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracedFrame {
    pub state: PhysicsState,
    pub touched: bool,
}

/// splitmix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `index`-th session of a run seeded with `global_seed`.
pub fn session_seed(global_seed: u64, index: u64) -> u64 {
    splitmix64(global_seed.wrapping_add(index))
}

pub fn session_id(seed: u64) -> String {
    format!("session-{seed:016x}")
}

struct World<'a> {
    scene: &'a SceneConfig,
    body: Body,
    seed: u64,
    rng: ChaCha8Rng,
    state: PhysicsState,
    hand: Vec3,
    markov: MarkovState,
    frames: Vec<Frame>,
    trace: Option<Vec<TracedFrame>>,
    events: Vec<PrimitiveEvent>,
}

/// Per-event bookkeeping filled in by primitive scripts.
#[derive(Default)]
struct EventLog {
    contact: Option<usize>,
    params: BTreeMap<String, f64>,
}

impl<'a> World<'a> {
    fn now(&self) -> usize {
        self.frames.len() - 1
    }

    fn has_room(&self) -> bool {
        self.frames.len() < SESSION_FRAMES
    }

    fn record(&mut self, touched: bool) {
        let index = self.frames.len();
        self.frames.push(Frame {
            index,
            object_pos: self.state.pos,
            object_rot: self.state.rot,
            hand_pos: self.hand,
        });
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TracedFrame {
                state: self.state,
                touched,
            });
        }
    }

    fn move_hand(&mut self, target: Vec3, speed: f64) {
        let d = target - self.hand;
        let dist = d.norm();
        let reach = speed * FRAME_DT;
        self.hand = if dist <= reach {
            target
        } else {
            self.hand + d * (reach / dist)
        };
    }

    /// One frame: the hand moves toward `target`, the object either follows
    /// the hand or evolves freely. Returns false once the session is full.
    fn step(&mut self, target: Vec3, speed: f64, touched: bool) -> Result<bool> {
        if !self.has_room() {
            return Ok(false);
        }
        let before = self.hand;
        self.move_hand(target, speed);
        if self.state.contact == Contact::Held {
            let pos = self.hand + GRIP_OFFSET;
            self.state.vel = (self.hand - before) / FRAME_DT;
            self.state.pos = pos;
            self.record(true);
        } else {
            self.state =
                step_body(&self.state, &self.body, self.scene, FRAME_DT, self.frames.len()).map_err(|e| match e {
                    Error::Integration { frame, .. } => Error::Integration { frame, seed: self.seed },
                    other => other,
                })?;
            self.record(touched);
        }
        Ok(self.has_room())
    }

    fn at_rest(&self) -> bool {
        self.state.contact.is_surface()
            && self.state.pivot.is_none()
            && self.state.vel.norm() < SLEEP_SPEED
            && self.state.ang_vel.norm() < SLEEP_SPEED
    }

    fn surface_state(&self) -> MarkovState {
        match self.state.contact {
            Contact::Counter => MarkovState::OnCounter,
            Contact::Held => MarkovState::Held,
            _ => MarkovState::OnGround,
        }
    }

    fn hand_rest_target(&self) -> Vec3 {
        Vec3::new(self.hand.x, self.scene.hand_height, self.hand.z)
    }

    fn wait_for_rest(&mut self) -> Result<bool> {
        let limit = (MAX_SETTLE_SECONDS / FRAME_DT) as usize;
        for _ in 0..limit {
            if self.at_rest() {
                break;
            }
            if !self.step(self.hand_rest_target(), RETRACT_SPEED, false)? {
                return Ok(false);
            }
        }
        if self.at_rest() {
            self.state.vel = Vec3::ZERO;
            self.state.ang_vel = Vec3::ZERO;
        }
        self.markov = self.surface_state();
        Ok(true)
    }

    fn idle(&mut self) -> Result<bool> {
        let secs = self.rng.random_range(IDLE_SECONDS.0..IDLE_SECONDS.1);
        let n = (secs / FRAME_DT).round() as usize;
        for _ in 0..n {
            if !self.step(self.hand_rest_target(), RETRACT_SPEED, false)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn grasp_point(&self) -> Vec3 {
        self.state.pos - GRIP_OFFSET
    }

    fn carry_height(&self) -> f64 {
        self.scene.hand_height + CARRY_LIFT
    }

    fn pick_up(&mut self, a: &ActionParams, log: &mut EventLog) -> Result<()> {
        let speed = a.pick_speed;
        log.params.insert("pick_speed".into(), speed);
        loop {
            let target = self.grasp_point();
            if (target - self.hand).norm() < 1e-9 {
                break;
            }
            if !self.step(target, speed, false)? {
                return Ok(());
            }
        }
        log.contact = Some(self.now());
        self.state = PhysicsState::at_rest(self.state.pos, self.state.rot, Contact::Held);
        self.markov = MarkovState::Held;
        let top = Vec3::new(self.hand.x, self.carry_height(), self.hand.z);
        while (self.hand - top).norm() > 1e-9 {
            if !self.step(top, speed, true)? {
                return Ok(());
            }
        }
        Ok(())
    }

    /// Carries the held object horizontally to `dest` at carry height.
    fn carry_to(&mut self, dest: Vec3, speed: f64) -> Result<bool> {
        let target = Vec3::new(dest.x, self.carry_height(), dest.z);
        while (self.hand - target).norm() > 1e-9 {
            if !self.step(target, speed, true)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn ground_point_near_hand(&mut self) -> Option<Vec3> {
        let margin = bounding_radius(self.body.mesh) + 0.35;
        for _ in 0..20 {
            let r = self.rng.random_range(0.3..1.2);
            let a = self.rng.random_range(0.0..std::f64::consts::TAU);
            let p = Vec3::new(
                self.hand.x + r * a.cos(),
                self.scene.floor_height(),
                self.hand.z + r * a.sin(),
            );
            let p = self.scene.clamp_to_room(p, 0.5);
            if !self.scene.over_counter_margin(p, margin) {
                return Some(p);
            }
        }
        None
    }

    fn put_down(&mut self, a: &ActionParams, log: &mut EventLog) -> Result<()> {
        let speed = a.put_speed;
        log.params.insert("put_speed".into(), speed);
        let on_counter = self.rng.random_bool(0.5);
        let dest = match (on_counter, self.ground_point_near_hand()) {
            (false, Some(p)) => p,
            _ => self.scene.random_counter_point(&mut self.rng, 0.2),
        };
        if !self.carry_to(dest, speed)? {
            return Ok(());
        }
        let depth = support_depth(self.body.mesh, self.state.rot);
        let target = dest + Vec3::new(0.0, depth, 0.0) - GRIP_OFFSET;
        while (self.hand - target).norm() > 1e-9 {
            if !self.step(target, speed, true)? {
                return Ok(());
            }
        }
        log.contact = Some(self.now());
        let contact = if dest.y > self.scene.floor_height() {
            Contact::Counter
        } else {
            Contact::Ground
        };
        self.state = PhysicsState::at_rest(self.hand + GRIP_OFFSET, self.state.rot, contact);
        self.markov = self.surface_state();
        Ok(())
    }

    fn random_heading(&mut self) -> Vec3 {
        let a = self.rng.random_range(0.0..std::f64::consts::TAU);
        Vec3::new(a.cos(), 0.0, a.sin())
    }

    fn random_spin(&mut self, scale: f64) -> Vec3 {
        let mut c = || self.rng.random_range(-1.0..1.0);
        Vec3::new(c(), c(), c()) * scale
    }

    fn throw(&mut self, a: &ActionParams, log: &mut EventLog) -> Result<()> {
        let force = a.throw_force;
        log.params.insert("throw_force".into(), force);
        if self.rng.random_bool(0.5) {
            let i = self.rng.random_range(0..self.scene.waypoints.len());
            let dest = self.scene.waypoint(i);
            if !self.carry_to(dest, a.put_speed)? {
                return Ok(());
            }
        }
        let dir = self.random_heading();
        let up = self.rng.random_range(0.2..0.8);
        let launch = (dir + Vec3::UP * up).normalized().expect("non-zero launch direction");
        let release_speed = force * FRAME_DT / self.body.mass;
        // wind-up then swing toward the throw direction
        for i in 0..SWING_FRAMES {
            let back = if i < SWING_FRAMES / 2 { -1.0 } else { 1.0 };
            let target = self.hand + launch * (back * 0.04);
            if !self.step(target, 3.0, true)? {
                return Ok(());
            }
        }
        log.contact = Some(self.now());
        log.params.insert("release_speed".into(), release_speed);
        let spin = self.random_spin(MAX_SPIN * (release_speed / 5.0).min(1.0));
        self.state = PhysicsState {
            pos: self.state.pos,
            vel: launch * release_speed,
            rot: self.state.rot,
            ang_vel: spin,
            contact: Contact::Air,
            pivot: None,
        };
        self.markov = MarkovState::OnGround;
        Ok(())
    }

    fn push(&mut self, a: &ActionParams, log: &mut EventLog) -> Result<()> {
        let speed = a.push_speed;
        log.params.insert("push_speed".into(), speed);
        let dir = self.random_heading();
        let reach = bounding_radius(self.body.mesh);
        let pre = self.state.pos - dir * (reach + 0.1);
        while (self.hand - pre).norm() > 1e-9 {
            if !self.step(pre, speed.max(1.5), false)? {
                return Ok(());
            }
        }
        let touch = self.state.pos - dir * reach;
        while (self.hand - touch).norm() > 1e-9 {
            if !self.step(touch, speed, false)? {
                return Ok(());
            }
        }
        log.contact = Some(self.now());
        for _ in 0..PUSH_CONTACT_FRAMES {
            self.state.vel.x = dir.x * speed;
            self.state.vel.z = dir.z * speed;
            let target = self.state.pos - dir * reach + dir * (speed * FRAME_DT);
            if !self.step(target, speed * 2.0, true)? {
                return Ok(());
            }
        }
        Ok(())
    }

    fn hit(&mut self, a: &ActionParams, log: &mut EventLog) -> Result<()> {
        let force = a.hit_force;
        let strike_speed = 1.5 + force / 50.0;
        log.params.insert("hit_force".into(), force);
        log.params.insert("strike_speed".into(), strike_speed);
        let dir = self.random_heading();
        let reach = bounding_radius(self.body.mesh);
        let lift = Vec3::UP * 0.05;
        let pre = self.state.pos - dir * (reach + 0.4) + lift;
        while (self.hand - pre).norm() > 1e-9 {
            if !self.step(pre, 1.5, false)? {
                return Ok(());
            }
        }
        let touch = self.state.pos - dir * reach + lift;
        while (self.hand - touch).norm() > 1e-9 {
            if !self.step(touch, strike_speed, false)? {
                return Ok(());
            }
        }
        log.contact = Some(self.now());
        let up = self.rng.random_range(0.0..0.5);
        let along = (dir + Vec3::UP * up).normalized().expect("non-zero strike direction");
        let dv = force * FRAME_DT / self.body.mass;
        let yaw = self.rng.random_range(-1.0..1.0) * (2.0 * dv).min(10.0);
        self.state.vel += along * dv;
        self.state.ang_vel += Vec3::UP * yaw;
        self.state.pivot = None;
        if self.state.vel.y > 0.0 {
            self.state.contact = Contact::Air;
        }
        let through = self.hand + dir * (strike_speed * FRAME_DT * FOLLOW_THROUGH_FRAMES as f64);
        for i in 0..FOLLOW_THROUGH_FRAMES {
            if !self.step(through, strike_speed, i == 0)? {
                return Ok(());
            }
        }
        Ok(())
    }

    fn execute(&mut self, primitive: Primitive) -> Result<bool> {
        let a = sample_action_params(&mut self.rng);
        self.execute_with(primitive, &a)
    }

    fn execute_with(&mut self, primitive: Primitive, a: &ActionParams) -> Result<bool> {
        let start = self.now();
        let mut log = EventLog::default();
        match primitive {
            Primitive::PickUp => self.pick_up(a, &mut log)?,
            Primitive::PutDown => self.put_down(a, &mut log)?,
            Primitive::Throw => self.throw(a, &mut log)?,
            Primitive::Push => self.push(a, &mut log)?,
            Primitive::Hit => self.hit(a, &mut log)?,
        }
        let end = self.now();
        self.events.push(PrimitiveEvent {
            primitive,
            start_frame: start,
            end_frame: end,
            contact_frame: log.contact.unwrap_or(end).min(end),
            action_params: log.params,
        });
        if !self.has_room() {
            return Ok(false);
        }
        if primitive != Primitive::PickUp && !self.wait_for_rest()? {
            return Ok(false);
        }
        Ok(true)
    }
}

/// Result of running one primitive on its own.
#[derive(Debug, Clone)]
pub struct PrimitiveRun {
    /// Frames from the starting state (frame 0) until the object is held
    /// or has come to rest.
    pub frames: Vec<Frame>,
    pub trace: Vec<TracedFrame>,
    pub event: PrimitiveEvent,
    pub state: PhysicsState,
    pub hand: Vec3,
    pub markov: MarkovState,
}

/// Executes a single primitive from `state` with the hand at `hand`.
/// Randomness beyond `action` (directions, destinations) comes from `seed`.
/// Fails with [`Error::IllegalPrimitive`] when the primitive cannot follow
/// the object's current state.
pub fn execute_primitive(
    primitive: Primitive,
    action: &ActionParams,
    params: &SessionParams,
    state: PhysicsState,
    hand: Vec3,
    scene: &SceneConfig,
    seed: u64,
) -> Result<PrimitiveRun> {
    let markov = match state.contact {
        Contact::Held => MarkovState::Held,
        Contact::Counter => MarkovState::OnCounter,
        Contact::Ground => MarkovState::OnGround,
        Contact::Air => return Err(Error::invalid("cannot act on an airborne object")),
    };
    if !super::markov::is_legal(markov, primitive) {
        return Err(Error::IllegalPrimitive {
            primitive: primitive.to_string(),
            state: markov.to_string(),
        });
    }
    if !state.is_finite() || !hand.is_finite() {
        return Err(Error::invalid("non-finite starting state"));
    }
    let mut world = World {
        scene,
        body: Body::from(params),
        seed,
        rng: ChaCha8Rng::seed_from_u64(seed),
        state,
        hand,
        markov,
        frames: Vec::new(),
        trace: Some(Vec::new()),
        events: Vec::new(),
    };
    world.record(false);
    world.execute_with(primitive, action)?;
    let event = world.events.pop().expect("one event per execution");
    Ok(PrimitiveRun {
        frames: world.frames,
        trace: world.trace.unwrap_or_default(),
        event,
        state: world.state,
        hand: world.hand,
        markov: world.markov,
    })
}

fn simulate(seed: u64, scene: &SceneConfig, traced: bool) -> Result<(Session, Option<Vec<TracedFrame>>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params: SessionParams = sample_session_params(&mut rng, scene);
    let body = Body::from(&params);
    let rot = Quat::from_yaw_degrees(params.target_rotation);
    let pos = params.target_position + Vec3::new(0.0, support_depth(params.mesh, rot), 0.0);
    let start = scene.waypoint(params.start_location);
    let mut world = World {
        scene,
        body,
        seed,
        rng,
        state: PhysicsState::at_rest(pos, rot, Contact::Counter),
        hand: Vec3::new(start.x, scene.hand_height, start.z),
        markov: MarkovState::OnCounter,
        frames: Vec::with_capacity(SESSION_FRAMES),
        trace: traced.then(|| Vec::with_capacity(SESSION_FRAMES)),
        events: Vec::new(),
    };
    world.record(false);
    loop {
        if !world.idle()? {
            break;
        }
        let primitive = next_primitive(world.markov, &mut world.rng);
        if !world.execute(primitive)? {
            break;
        }
    }
    let session = Session {
        id: session_id(seed),
        seed,
        params,
        events: world.events,
        frames: world.frames,
    };
    session.validate()?;
    Ok((session, world.trace))
}

/// Simulates one 180 s session. The same seed always yields the same
/// session, bit for bit.
pub fn generate_session(seed: u64, scene: &SceneConfig) -> Result<Session> {
    simulate(seed, scene, false).map(|(s, _)| s)
}

/// Like [`generate_session`], also returning the physics state of every
/// frame.
pub fn generate_session_traced(seed: u64, scene: &SceneConfig) -> Result<(Session, Vec<TracedFrame>)> {
    simulate(seed, scene, true).map(|(s, t)| (s, t.expect("traced run keeps a trace")))
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {workers} workers: {e}")))
}

/// Sessions `first..first + count` of the run seeded with `global_seed`,
/// generated on `workers` threads. Output order and content do not depend
/// on `workers`.
pub fn generate_sessions(
    global_seed: u64,
    first: u64,
    count: usize,
    scene: &SceneConfig,
    workers: usize,
) -> Result<Vec<Session>> {
    pool(workers)?.install(|| {
        (0..count as u64)
            .into_par_iter()
            .map(|i| generate_session(session_seed(global_seed, first + i), scene))
            .collect()
    })
}

/// Generates sessions in chunks of `chunk` and hands each to `f` in index
/// order, so that at most one chunk is held in memory.
pub fn for_each_session<F>(
    global_seed: u64,
    first: u64,
    count: usize,
    scene: &SceneConfig,
    workers: usize,
    chunk: usize,
    mut f: F,
) -> Result<()>
where
    F: FnMut(Session) -> Result<()>,
{
    let pool = pool(workers)?;
    let chunk = chunk.max(1);
    let mut done = 0;
    while done < count {
        let n = chunk.min(count - done);
        let base = first + done as u64;
        let batch: Vec<Session> = pool.install(|| {
            (0..n as u64)
                .into_par_iter()
                .map(|i| generate_session(session_seed(global_seed, base + i), scene))
                .collect::<Result<_>>()
        })?;
        for s in batch {
            f(s)?;
        }
        done += n;
    }
    Ok(())
}

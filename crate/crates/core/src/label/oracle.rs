//! Kinematic rule oracle: labels a simulated clip from its trajectory and
//! the event log of its session.

use serde::{Deserialize, Serialize};

use super::{Label, Verb, VerbLabels};
use crate::error::{Error, Result};
use crate::geometry::{angular_velocity, Quat, Vec3};
use crate::sim::physics::{rolling_radius, rolls_in, support_depth};
use crate::sim::{Mesh, SceneConfig, SessionParams};
use crate::trajectory::{held_intervals, Clip, Primitive, PrimitiveEvent, FRAME_DT};

/// Rule thresholds. Speeds in m/s, angles in degrees, durations in frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    /// fall: downward speed above this ...
    pub fall_speed: f64,
    /// ... for at least this many frames (also the minimum run for roll,
    /// slide and spin).
    pub min_frames: usize,
    /// bounce: vertical speed on both sides of the reversal.
    pub bounce_speed: f64,
    /// drop: release speed below this counts as letting go rather than throwing.
    pub drop_release_speed: f64,
    /// throw: release speed at or above this.
    pub throw_min_speed: f64,
    /// toss: release speed below this.
    pub toss_max_speed: f64,
    /// carry: horizontal hand travel while holding.
    pub carry_distance: f64,
    /// roll: contact-point slip at most this ...
    pub roll_slip: f64,
    /// ... while moving at least this fast (also used by slide).
    pub moving_speed: f64,
    /// slide: angular speed at most this, rad/s.
    pub slide_angular_speed: f64,
    /// tumble: in-contact reorientation.
    pub tumble_angle: f64,
    /// flip: airborne rotation about a horizontal axis.
    pub flip_angle: f64,
    /// spin: vertical-axis angular speed, rad/s ...
    pub spin_speed: f64,
    /// ... with translation at most this.
    pub spin_max_translation: f64,
    /// turn: net heading change.
    pub turn_angle: f64,
    /// tip: tilt increase past this, staying at or below `fall_over_angle`.
    pub tip_angle: f64,
    pub fall_over_angle: f64,
    /// topple: frames between passing `tip_angle` and `fall_over_angle`.
    pub topple_frames: usize,
    /// slap: hand speed at contact.
    pub slap_hand_speed: f64,
    /// stop/start: speed threshold.
    pub still_speed: f64,
    /// start: still frames before moving.
    pub still_frames: usize,
    /// Gap between object bottom and surface that still counts as contact, m.
    pub contact_tolerance: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            fall_speed: 1.0,
            min_frames: 6,
            bounce_speed: 0.3,
            drop_release_speed: 1.0,
            throw_min_speed: 2.0,
            toss_max_speed: 5.0,
            carry_distance: 0.3,
            roll_slip: 0.15,
            moving_speed: 0.2,
            slide_angular_speed: 1.0,
            tumble_angle: 180.0,
            flip_angle: 180.0,
            spin_speed: 3.0,
            spin_max_translation: 0.3,
            turn_angle: 45.0,
            tip_angle: 10.0,
            fall_over_angle: 45.0,
            topple_frames: 3,
            slap_hand_speed: 3.0,
            still_speed: 0.05,
            still_frames: 10,
            contact_tolerance: 2e-3,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        let reals = [
            ("fall_speed", self.fall_speed),
            ("bounce_speed", self.bounce_speed),
            ("drop_release_speed", self.drop_release_speed),
            ("throw_min_speed", self.throw_min_speed),
            ("toss_max_speed", self.toss_max_speed),
            ("carry_distance", self.carry_distance),
            ("roll_slip", self.roll_slip),
            ("moving_speed", self.moving_speed),
            ("slide_angular_speed", self.slide_angular_speed),
            ("tumble_angle", self.tumble_angle),
            ("flip_angle", self.flip_angle),
            ("spin_speed", self.spin_speed),
            ("spin_max_translation", self.spin_max_translation),
            ("turn_angle", self.turn_angle),
            ("tip_angle", self.tip_angle),
            ("fall_over_angle", self.fall_over_angle),
            ("slap_hand_speed", self.slap_hand_speed),
            ("still_speed", self.still_speed),
            ("contact_tolerance", self.contact_tolerance),
        ];
        for (name, v) in reals {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("oracle.{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("min_frames", self.min_frames),
            ("topple_frames", self.topple_frames),
            ("still_frames", self.still_frames),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("oracle.{name} must be positive")));
            }
        }
        if self.tip_angle >= self.fall_over_angle {
            return Err(Error::Config(
                "oracle.tip_angle must be below oracle.fall_over_angle".into(),
            ));
        }
        Ok(())
    }
}

/// Session-level ground truth the oracle needs besides the clip itself.
#[derive(Debug, Clone, Copy)]
pub struct Provenance<'a> {
    pub params: &'a SessionParams,
    pub events: &'a [PrimitiveEvent],
}

fn contact_in_clip(e: &PrimitiveEvent, clip: &Clip) -> bool {
    e.contact_frame >= clip.start() && e.contact_frame < clip.end()
}

/// Whether the verb's precondition can occur in the clip at all. Verbs
/// that fail are masked rather than labeled.
pub fn heuristic_filter(clip: &Clip, verb: Verb, events: &[PrimitiveEvent]) -> bool {
    let (start, end) = (clip.start(), clip.end());
    match verb {
        Verb::Carry | Verb::Drop | Verb::Throw | Verb::Toss | Verb::PickUp | Verb::PutDown => {
            held_intervals(events, usize::MAX)
                .iter()
                .any(|&(g, r)| g < end && r > start)
        }
        Verb::Hit | Verb::Push | Verb::Bump | Verb::Slap => {
            events.iter().any(|e| e.primitive.is_strike() && e.overlaps(start, end))
        }
        _ => true,
    }
}

/// Per-frame quantities derived once per clip.
struct Kinematics {
    pos: Vec<Vec3>,
    rot: Vec<Quat>,
    hand: Vec<Vec3>,
    held: Vec<bool>,
    contact: Vec<bool>,
    on_counter: Vec<bool>,
    /// Sample t spans frames t → t+1.
    vel: Vec<Vec3>,
    ang: Vec<Vec3>,
}

impl Kinematics {
    fn new(clip: &Clip, p: &Provenance, scene: &SceneConfig, cfg: &OracleConfig) -> Result<Kinematics> {
        let frames = clip.frames();
        let held_iv = held_intervals(p.events, usize::MAX);
        let pos: Vec<Vec3> = frames.iter().map(|f| f.object_pos).collect();
        let rot: Vec<Quat> = frames.iter().map(|f| f.object_rot).collect();
        let hand = frames.iter().map(|f| f.hand_pos).collect();
        let held: Vec<bool> = frames
            .iter()
            .map(|f| held_iv.iter().any(|&(g, r)| f.index >= g && f.index < r))
            .collect();
        let mut contact = Vec::with_capacity(frames.len());
        let mut on_counter = Vec::with_capacity(frames.len());
        for (i, f) in frames.iter().enumerate() {
            let p_ = f.object_pos;
            let counter = scene.over_counter(p_) && p_.y >= scene.counter_height;
            let surface = if counter {
                scene.counter_height
            } else {
                scene.floor_height()
            };
            let gap = p_.y - support_depth(p.params.mesh, f.object_rot) - surface;
            let c = !held[i] && gap <= cfg.contact_tolerance;
            contact.push(c);
            on_counter.push(c && counter);
        }
        let n = frames.len();
        let vel = (0..n - 1).map(|t| (pos[t + 1] - pos[t]) / FRAME_DT).collect();
        let ang = (0..n - 1)
            .map(|t| angular_velocity(rot[t], rot[t + 1], FRAME_DT))
            .collect::<Result<Vec<_>>>()?;
        Ok(Kinematics {
            pos,
            rot,
            hand,
            held,
            contact,
            on_counter,
            vel,
            ang,
        })
    }

    fn samples(&self) -> usize {
        self.vel.len()
    }

    fn free(&self, t: usize) -> bool {
        !self.held[t] && !self.held[t + 1]
    }

    fn touching(&self, t: usize) -> bool {
        self.contact[t] && self.contact[t + 1]
    }

    fn airborne(&self, t: usize) -> bool {
        self.free(t) && !self.contact[t] && !self.contact[t + 1]
    }

    fn speed(&self, t: usize) -> f64 {
        self.vel[t].norm()
    }
}

/// Longest run of consecutive samples satisfying `pred`.
fn longest_run(n: usize, mut pred: impl FnMut(usize) -> bool) -> usize {
    let (mut best, mut cur) = (0, 0);
    for t in 0..n {
        if pred(t) {
            cur += 1;
            best = best.max(cur);
        } else {
            cur = 0;
        }
    }
    best
}

/// Runs of consecutive samples satisfying `pred` with length ≥ `min`, as
/// `(start, end)` sample ranges.
fn runs(n: usize, min: usize, mut pred: impl FnMut(usize) -> bool) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for t in 0..=n {
        let ok = t < n && pred(t);
        match (ok, start) {
            (true, None) => start = Some(t),
            (false, Some(s)) => {
                if t - s >= min {
                    out.push((s, t));
                }
                start = None;
            }
            _ => {}
        }
    }
    out
}

/// Body axis (x, y or z) closest to vertical in the clip's first frame.
fn reference_axis(q: Quat) -> Vec3 {
    let axes = [Vec3::new(1.0, 0.0, 0.0), Vec3::UP, Vec3::new(0.0, 0.0, 1.0)];
    axes.into_iter()
        .max_by(|a, b| q.rotate(*a).y.abs().total_cmp(&q.rotate(*b).y.abs()))
        .expect("three axes")
}

fn tilt_degrees(q: Quat, axis: Vec3) -> f64 {
    q.rotate(axis).y.abs().clamp(0.0, 1.0).acos().to_degrees()
}

/// Heading of the object about the vertical axis, radians.
fn heading(q: Quat) -> f64 {
    let mut f = q.rotate(Vec3::new(1.0, 0.0, 0.0)).horizontal();
    if f.norm() < 0.3 {
        f = q.rotate(Vec3::new(0.0, 0.0, 1.0)).horizontal();
    }
    f.z.atan2(f.x)
}

fn wrap_angle(a: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let r = a.rem_euclid(tau);
    if r > std::f64::consts::PI {
        r - tau
    } else {
        r
    }
}

/// Labels all 24 verbs of a simulated clip. Verbs failing
/// [`heuristic_filter`] are masked.
pub fn oracle_label(
    clip: &Clip,
    provenance: Option<&Provenance>,
    scene: &SceneConfig,
    cfg: &OracleConfig,
) -> Result<VerbLabels> {
    let p = provenance.ok_or_else(|| Error::MissingProvenance { clip_id: clip.id() })?;
    let k = Kinematics::new(clip, p, scene, cfg)?;
    let n = k.samples();
    let mesh = p.params.mesh;
    let mut out = VerbLabels::all_masked();
    let mut set = |v: Verb, yes: bool| out.set(v, Label::from_bool(yes));

    // vertical motion
    let falls = runs(n, cfg.min_frames, |t| k.free(t) && k.vel[t].y < -cfg.fall_speed);
    set(Verb::Fall, !falls.is_empty());
    let fall_off = falls.iter().any(|&(s, _)| {
        let mut t = s;
        while t > 0 && !k.contact[t] && !k.held[t] {
            t -= 1;
        }
        k.on_counter[t] && k.pos[n].y < scene.counter_height
    });
    set(Verb::FallOff, fall_off);
    let bounce = (0..n.saturating_sub(1))
        .any(|t| k.free(t) && k.free(t + 1) && k.vel[t].y < -cfg.bounce_speed && k.vel[t + 1].y > cfg.bounce_speed);
    set(Verb::Bounce, bounce);

    // agent events whose key frame lies in the clip
    let in_clip: Vec<&PrimitiveEvent> = p.events.iter().filter(|e| contact_in_clip(e, clip)).collect();
    let has = |prim: Primitive| in_clip.iter().any(|e| e.primitive == prim);
    set(Verb::PickUp, has(Primitive::PickUp));
    set(Verb::PutDown, has(Primitive::PutDown));
    set(Verb::Push, has(Primitive::Push));
    set(Verb::Hit, has(Primitive::Hit));
    let strikes: Vec<&&PrimitiveEvent> = in_clip.iter().filter(|e| e.primitive.is_strike()).collect();
    set(Verb::Bump, !strikes.is_empty());
    let slap = strikes.iter().any(|e| {
        let i = e.contact_frame - clip.start();
        i > 0 && (k.hand[i] - k.hand[i - 1]).norm() / FRAME_DT >= cfg.slap_hand_speed
    });
    set(Verb::Slap, slap);

    let releases: Vec<(usize, f64)> = in_clip
        .iter()
        .filter(|e| e.primitive == Primitive::Throw)
        .map(|e| (e.contact_frame - clip.start(), e.param("release_speed").unwrap_or(0.0)))
        .collect();
    set(Verb::Throw, releases.iter().any(|&(_, v)| v >= cfg.throw_min_speed));
    set(Verb::Toss, releases.iter().any(|&(_, v)| v < cfg.toss_max_speed));
    let drop = releases
        .iter()
        .any(|&(r, v)| v < cfg.drop_release_speed && falls.iter().any(|&(s, _)| s >= r));
    set(Verb::Drop, drop);

    let held_hand: Vec<Vec3> = (0..=n).filter(|&t| k.held[t]).map(|t| k.hand[t].horizontal()).collect();
    let carry = held_hand
        .iter()
        .any(|a| held_hand.iter().any(|b| (*a - *b).norm() >= cfg.carry_distance));
    set(Verb::Carry, carry);

    // contact motion
    let roll_r = rolling_radius(mesh);
    let rolling = |t: usize| -> bool {
        let Some(r) = roll_r else { return false };
        if !(k.touching(t) && rolls_in(mesh, k.rot[t]) && k.speed(t) >= cfg.moving_speed) {
            return false;
        }
        let slip = k.vel[t] + k.ang[t].cross(Vec3::new(0.0, -r, 0.0));
        slip.horizontal().norm() <= cfg.roll_slip
    };
    set(Verb::Roll, longest_run(n, rolling) >= cfg.min_frames);
    let sliding = |t: usize| {
        k.touching(t) && k.vel[t].horizontal().norm() >= cfg.moving_speed && k.ang[t].norm() <= cfg.slide_angular_speed
    };
    set(Verb::Slide, longest_run(n, sliding) >= cfg.min_frames);

    let tumble: f64 = (0..n)
        .filter(|&t| k.free(t) && (k.contact[t] || k.contact[t + 1]) && !rolls_in(mesh, k.rot[t]))
        .map(|t| k.ang[t].horizontal().norm() * FRAME_DT)
        .sum();
    set(
        Verb::Tumble,
        mesh != Mesh::Sphere && tumble.to_degrees() >= cfg.tumble_angle,
    );
    let flip: f64 = (0..n)
        .filter(|&t| k.airborne(t))
        .map(|t| k.ang[t].horizontal().norm() * FRAME_DT)
        .sum();
    set(Verb::Flip, flip.to_degrees() >= cfg.flip_angle);
    let spinning = |t: usize| k.free(t) && k.ang[t].y.abs() >= cfg.spin_speed && k.speed(t) <= cfg.spin_max_translation;
    set(Verb::Spin, longest_run(n, spinning) >= cfg.min_frames);
    let turn = wrap_angle(heading(k.rot[n]) - heading(k.rot[0])).abs().to_degrees();
    set(Verb::Turn, turn >= cfg.turn_angle);

    // tilt
    let axis = reference_axis(k.rot[0]);
    let tilt: Vec<f64> = k.rot.iter().map(|q| tilt_degrees(*q, axis)).collect();
    let start_upright = tilt[0] < cfg.tip_angle;
    let max_tilt = tilt.iter().cloned().fold(0.0, f64::max);
    let tip = mesh != Mesh::Sphere && start_upright && max_tilt > cfg.tip_angle && max_tilt <= cfg.fall_over_angle;
    set(Verb::Tip, tip);
    let first_over = tilt.iter().position(|&a| a > cfg.fall_over_angle);
    let fall_over = mesh != Mesh::Sphere
        && tilt[0] <= cfg.fall_over_angle
        && tilt[n] > cfg.fall_over_angle
        && k.contact[n]
        && first_over.is_some();
    set(Verb::FallOver, fall_over);
    let topple = fall_over && {
        let first_tip = tilt
            .iter()
            .position(|&a| a > cfg.tip_angle)
            .expect("tilt passed fall-over angle");
        first_over.expect("checked above") - first_tip >= cfg.topple_frames
    };
    set(Verb::Topple, topple);

    // speed transitions
    let slow = |t: usize| k.speed(t) < cfg.still_speed;
    let stop = (1..n).any(|t| !slow(t - 1) && (t..n).all(slow));
    set(Verb::Stop, stop);
    let start = (cfg.still_frames..n).any(|t| !slow(t) && (t - cfg.still_frames..t).all(slow));
    set(Verb::Start, start);

    for v in Verb::ALL {
        if !heuristic_filter(clip, v, p.events) {
            out.set(v, Label::Masked);
        }
    }
    Ok(out)
}

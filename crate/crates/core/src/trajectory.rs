//! Frame, session and clip data model.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Quat, Vec3};
use crate::sim::SessionParams;

pub const FPS: f64 = 60.0;
pub const FRAME_DT: f64 = 1.0 / FPS;
/// 60 fps × 180 s.
pub const SESSION_FRAMES: usize = 10_800;
/// 1.5 s at 60 fps.
pub const CLIP_FRAMES: usize = 90;
/// Object position XYZ, hand position XYZ, object rotation XYZW.
pub const FEATURES: usize = 10;

pub type FeatureRow = [f64; FEATURES];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub index: usize,
    pub object_pos: Vec3,
    pub object_rot: Quat,
    pub hand_pos: Vec3,
}

impl Frame {
    pub fn features(&self) -> FeatureRow {
        let (p, h, q) = (self.object_pos, self.hand_pos, self.object_rot);
        [p.x, p.y, p.z, h.x, h.y, h.z, q.x, q.y, q.z, q.w]
    }

    pub fn from_features(index: usize, r: &FeatureRow) -> Frame {
        Frame {
            index,
            object_pos: Vec3::new(r[0], r[1], r[2]),
            hand_pos: Vec3::new(r[3], r[4], r[5]),
            object_rot: Quat::new(r[6], r[7], r[8], r[9]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Primitive {
    PickUp,
    PutDown,
    Push,
    Throw,
    Hit,
}

impl Primitive {
    pub const ALL: [Primitive; 5] = [
        Primitive::PickUp,
        Primitive::PutDown,
        Primitive::Push,
        Primitive::Throw,
        Primitive::Hit,
    ];

    /// Whether the agent's hand strikes the object (as opposed to grasping
    /// or releasing it).
    pub fn is_strike(self) -> bool {
        matches!(self, Primitive::Push | Primitive::Hit)
    }
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// One executed action primitive.
///
/// `contact_frame` is the grasp frame for PickUp, the release frame for
/// PutDown and Throw, and the first hand contact for Push and Hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveEvent {
    pub primitive: Primitive,
    pub start_frame: usize,
    pub end_frame: usize,
    pub contact_frame: usize,
    pub action_params: BTreeMap<String, f64>,
}

impl PrimitiveEvent {
    pub fn param(&self, key: &str) -> Option<f64> {
        self.action_params.get(key).copied()
    }

    pub fn overlaps(&self, start: usize, end: usize) -> bool {
        self.start_frame < end && self.end_frame >= start
    }
}

/// Frame ranges `[grasp, release)` during which the object is held,
/// derived from the event log. An unterminated hold runs to `horizon`.
pub fn held_intervals(events: &[PrimitiveEvent], horizon: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut grasp = None;
    for e in events {
        match e.primitive {
            Primitive::PickUp => grasp = Some(e.contact_frame),
            Primitive::PutDown | Primitive::Throw => {
                if let Some(g) = grasp.take() {
                    out.push((g, e.contact_frame));
                }
            }
            _ => {}
        }
    }
    if let Some(g) = grasp {
        out.push((g, horizon));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub id: String,
    pub seed: u64,
    pub params: SessionParams,
    pub events: Vec<PrimitiveEvent>,
    pub frames: Vec<Frame>,
}

impl Session {
    /// Checks the frame-count and ordering invariants.
    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| Error::Invariant {
            session_id: self.id.clone(),
            message,
        };
        if self.frames.len() != SESSION_FRAMES {
            return Err(fail(format!(
                "expected {SESSION_FRAMES} frames, found {}",
                self.frames.len()
            )));
        }
        for (i, f) in self.frames.iter().enumerate() {
            if f.index != i {
                return Err(fail(format!("frame {i} carries index {}", f.index)));
            }
            if (f.object_rot.norm() - 1.0).abs() > 1e-6 {
                return Err(fail(format!("frame {i} rotation is not normalized")));
            }
        }
        let mut last_end = None;
        for (i, e) in self.events.iter().enumerate() {
            if e.start_frame > e.end_frame {
                return Err(fail(format!("event {i} ends before it starts")));
            }
            if let Some(prev) = last_end {
                if e.start_frame <= prev {
                    return Err(fail(format!("event {i} overlaps its predecessor")));
                }
            }
            last_end = Some(e.end_frame);
        }
        Ok(())
    }

    /// Events that overlap `[start, end)`.
    pub fn events_in(&self, start: usize, end: usize) -> Vec<PrimitiveEvent> {
        self.events.iter().filter(|e| e.overlaps(start, end)).cloned().collect()
    }

    /// Copies `CLIP_FRAMES` frames starting at `start`.
    pub fn clip(&self, start: usize) -> Result<Clip> {
        let end = start + CLIP_FRAMES;
        if end > self.frames.len() {
            return Err(Error::invalid(format!(
                "clip [{start}, {end}) exceeds session {} of {} frames",
                self.id,
                self.frames.len()
            )));
        }
        Clip::new(self.id.clone(), start, self.frames[start..end].to_vec())
    }
}

/// A 90-frame window of one session.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    session_id: String,
    start: usize,
    frames: Vec<Frame>,
}

impl Clip {
    pub fn new(session_id: String, start: usize, frames: Vec<Frame>) -> Result<Clip> {
        if frames.len() != CLIP_FRAMES {
            return Err(Error::invalid(format!(
                "clip needs {CLIP_FRAMES} frames, got {}",
                frames.len()
            )));
        }
        if let Some((i, f)) = frames.iter().enumerate().find(|(i, f)| f.index != start + i) {
            return Err(Error::invalid(format!(
                "clip frame {i} has index {} but the clip starts at {start}",
                f.index
            )));
        }
        Ok(Clip {
            session_id,
            start,
            frames,
        })
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn start(&self) -> usize {
        self.start
    }

    /// Exclusive end frame.
    pub fn end(&self) -> usize {
        self.start + CLIP_FRAMES
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    /// Stable identifier `"<session>:<start>"`.
    pub fn id(&self) -> String {
        clip_id(&self.session_id, self.start)
    }

    pub fn feature_matrix(&self) -> FeatureMatrix {
        feature_matrix(self)
    }
}

pub fn clip_id(session_id: &str, start: usize) -> String {
    format!("{session_id}:{start}")
}

/// 90 × 10 feature matrix of one clip; row `t` is clip frame `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: Vec<FeatureRow>,
}

impl FeatureMatrix {
    pub fn from_rows(rows: Vec<FeatureRow>) -> Result<FeatureMatrix> {
        if rows.len() != CLIP_FRAMES {
            return Err(Error::invalid(format!(
                "feature matrix needs {CLIP_FRAMES} rows, got {}",
                rows.len()
            )));
        }
        Ok(FeatureMatrix { rows })
    }

    pub fn rows(&self) -> &[FeatureRow] {
        &self.rows
    }

    /// Rebuilds frames whose indices start at `start`.
    pub fn to_frames(&self, start: usize) -> Vec<Frame> {
        self.rows
            .iter()
            .enumerate()
            .map(|(t, r)| Frame::from_features(start + t, r))
            .collect()
    }

    /// Row-major copy of all 900 values.
    pub fn flatten(&self) -> Vec<f64> {
        self.rows.iter().flatten().copied().collect()
    }
}

pub fn feature_matrix(clip: &Clip) -> FeatureMatrix {
    FeatureMatrix {
        rows: clip.frames.iter().map(Frame::features).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(i: usize) -> Frame {
        Frame {
            index: i,
            object_pos: Vec3::new(i as f64 * 0.01, 0.5, -0.2),
            object_rot: Quat::from_yaw_degrees(i as f64),
            hand_pos: Vec3::new(1.0, 1.0, i as f64 * -0.02),
        }
    }

    #[test]
    fn static_clip_features() {
        let h = Vec3::new(0.4, 1.1, -0.3);
        let frames = (0..CLIP_FRAMES)
            .map(|i| Frame {
                index: 10 + i,
                object_pos: Vec3::ZERO,
                object_rot: Quat::IDENTITY,
                hand_pos: h,
            })
            .collect();
        let clip = Clip::new("s".into(), 10, frames).unwrap();
        let m = feature_matrix(&clip);
        assert_eq!(m.rows().len(), 90);
        for r in m.rows() {
            assert_eq!(r, &[0.0, 0.0, 0.0, 0.4, 1.1, -0.3, 0.0, 0.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn row_order_and_round_trip() {
        let frames: Vec<Frame> = (0..CLIP_FRAMES).map(|i| frame(100 + i)).collect();
        let clip = Clip::new("s".into(), 100, frames.clone()).unwrap();
        let m = clip.feature_matrix();
        let f0 = &frames[0];
        assert_eq!(
            m.rows()[0],
            [
                f0.object_pos.x,
                f0.object_pos.y,
                f0.object_pos.z,
                f0.hand_pos.x,
                f0.hand_pos.y,
                f0.hand_pos.z,
                f0.object_rot.x,
                f0.object_rot.y,
                f0.object_rot.z,
                f0.object_rot.w
            ]
        );
        assert_eq!(m.to_frames(100), frames);
    }

    #[test]
    fn clip_rejects_bad_frames() {
        let frames: Vec<Frame> = (0..CLIP_FRAMES - 1).map(frame).collect();
        assert!(Clip::new("s".into(), 0, frames).is_err());
        let frames: Vec<Frame> = (0..CLIP_FRAMES).map(|i| frame(i * 2)).collect();
        assert!(Clip::new("s".into(), 0, frames).is_err());
    }

    #[test]
    fn held_intervals_pair_grasp_and_release() {
        let ev = |p, s, c, e| PrimitiveEvent {
            primitive: p,
            start_frame: s,
            end_frame: e,
            contact_frame: c,
            action_params: BTreeMap::new(),
        };
        let events = vec![
            ev(Primitive::Push, 0, 10, 20),
            ev(Primitive::PickUp, 100, 130, 160),
            ev(Primitive::Throw, 300, 320, 330),
            ev(Primitive::PickUp, 500, 520, 540),
        ];
        assert_eq!(held_intervals(&events, 1000), vec![(130, 320), (520, 1000)]);
    }
}

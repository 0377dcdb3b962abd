//! Motion-energy segmentation of sessions into 90-frame clips.
//!
//! 1. cluster the object positions of a session with k-means;
//! 2. count cluster transitions in a sliding window (motion energy);
//! 3. smooth the energy curve with a Gaussian kernel;
//! 4. keep runs above a threshold, filter by length and crop to 90 frames.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::sim::agent::splitmix64;
use crate::trajectory::{Clip, Session, CLIP_FRAMES};

pub const MIN_SEGMENT: usize = 72;
pub const MAX_SEGMENT: usize = 96;
const MAX_LLOYD_ITERS: usize = 100;
const CONVERGED_SHIFT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentConfig {
    pub k: usize,
    pub window: usize,
    pub sigma: f64,
    pub threshold: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        SegmentConfig {
            k: 24,
            window: 45,
            sigma: 15.0,
            threshold: 0.1,
        }
    }
}

impl SegmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!("segment.k must be at least 2, got {}", self.k)));
        }
        if self.window < 2 {
            return Err(Error::Config(format!(
                "segment.window must be at least 2, got {}",
                self.window
            )));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Config(format!(
                "segment.sigma must be positive, got {}",
                self.sigma
            )));
        }
        if !self.threshold.is_finite() {
            return Err(Error::Config("segment.threshold must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub centroids: Vec<Vec3>,
    pub assignments: Vec<usize>,
    /// Sum of squared distances after initialization and after each Lloyd
    /// iteration.
    pub objective_history: Vec<f64>,
}

impl ClusterModel {
    pub fn objective(&self) -> f64 {
        *self.objective_history.last().unwrap_or(&0.0)
    }
}

pub fn count_distinct(positions: &[Vec3]) -> usize {
    positions
        .iter()
        .map(|p| [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()])
        .collect::<HashSet<_>>()
        .len()
}

fn nearest(p: Vec3, centroids: &[Vec3]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = (p - *c).norm_sq();
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Seeded k-means with k-means++ initialization and Lloyd iterations until
/// no centroid moves more than 1e-6 or 100 iterations.
pub fn cluster_positions<R: Rng + ?Sized>(positions: &[Vec3], k: usize, rng: &mut R) -> Result<ClusterModel> {
    if k < 2 {
        return Err(Error::invalid(format!("k must be at least 2, got {k}")));
    }
    if positions.iter().any(|p| !p.is_finite()) {
        return Err(Error::invalid("positions must be finite"));
    }
    let distinct = count_distinct(positions);
    if distinct < k {
        return Err(Error::invalid(format!(
            "need at least {k} distinct positions, got {distinct}"
        )));
    }

    let mut centroids = vec![positions[rng.random_range(0..positions.len())]];
    let mut d2: Vec<f64> = positions.iter().map(|p| (*p - centroids[0]).norm_sq()).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let mut target = rng.random::<f64>() * total;
        let mut pick = None;
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 {
                pick = Some(i);
                if target < d {
                    break;
                }
                target -= d;
            }
        }
        let c = positions[pick.expect("a point away from every centroid exists")];
        for (i, p) in positions.iter().enumerate() {
            d2[i] = d2[i].min((*p - c).norm_sq());
        }
        centroids.push(c);
    }

    let mut assignments = vec![0; positions.len()];
    let mut history = Vec::new();
    let mut objective = 0.0;
    for (i, p) in positions.iter().enumerate() {
        let (j, d) = nearest(*p, &centroids);
        assignments[i] = j;
        objective += d;
    }
    history.push(objective);
    for _ in 0..MAX_LLOYD_ITERS {
        let mut sums = vec![Vec3::ZERO; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in positions.iter().zip(&assignments) {
            sums[a] += *p;
            counts[a] += 1;
        }
        let mut shift: f64 = 0.0;
        for j in 0..k {
            if counts[j] > 0 {
                let c = sums[j] / counts[j] as f64;
                shift = shift.max((c - centroids[j]).norm());
                centroids[j] = c;
            }
        }
        objective = 0.0;
        for (i, p) in positions.iter().enumerate() {
            let (j, d) = nearest(*p, &centroids);
            assignments[i] = j;
            objective += d;
        }
        history.push(objective);
        if shift < CONVERGED_SHIFT {
            break;
        }
    }
    Ok(ClusterModel {
        centroids,
        assignments,
        objective_history: history,
    })
}

/// Number of adjacent-label changes `(i, i+1)` with both frames inside the
/// `w`-frame window centered at each frame; windows are truncated at the
/// ends. Values are integers in `[0, w − 1]`.
pub fn motion_energy(labels: &[usize], w: usize) -> Result<Vec<f64>> {
    if w < 2 {
        return Err(Error::invalid(format!("window must be at least 2, got {w}")));
    }
    let n = labels.len();
    // changes[i] = 1 if labels[i] != labels[i + 1]; prefix[i] = sum of changes[..i]
    let mut prefix = vec![0usize; n.max(1)];
    for i in 1..n {
        prefix[i] = prefix[i - 1] + usize::from(labels[i - 1] != labels[i]);
    }
    let back = (w - 1) / 2;
    Ok((0..n)
        .map(|t| {
            let lo = t.saturating_sub(back);
            let hi = (t + (w - 1 - back)).min(n - 1);
            // pairs (i, i+1) with lo <= i < hi
            (prefix[hi] - prefix[lo]) as f64
        })
        .collect())
}

/// Gaussian smoothing, kernel truncated at ±⌈3σ⌉ and renormalized where it
/// overhangs the ends.
pub fn smooth(curve: &[f64], sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|j| (-((j * j) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let n = curve.len() as isize;
    Ok((0..n)
        .map(|t| {
            let (mut acc, mut mass) = (0.0, 0.0);
            for (ki, j) in (-radius..=radius).enumerate() {
                let s = t + j;
                if s >= 0 && s < n {
                    acc += kernel[ki] * curve[s as usize];
                    mass += kernel[ki];
                }
            }
            acc / mass
        })
        .collect())
}

/// Half-open frame range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Maximal runs of the curve strictly above `threshold`.
pub fn extract_segments(curve: &[f64], threshold: f64) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut start = None;
    for (t, &v) in curve.iter().enumerate() {
        match (v > threshold, start) {
            (true, None) => start = Some(t),
            (false, Some(s)) => {
                out.push(Segment { start: s, end: t });
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(Segment {
            start: s,
            end: curve.len(),
        });
    }
    out
}

/// Start frame of the 90-frame clip for a segment of acceptable length:
/// centered crop for long segments, symmetric extension (clamped to the
/// session) for short ones.
pub fn clip_start(seg: Segment, session_len: usize) -> Option<usize> {
    let len = seg.len();
    if !(MIN_SEGMENT..=MAX_SEGMENT).contains(&len) || session_len < CLIP_FRAMES {
        return None;
    }
    let start = if len >= CLIP_FRAMES {
        seg.start + (len - CLIP_FRAMES) / 2
    } else {
        let pad = CLIP_FRAMES - len;
        seg.start.saturating_sub(pad / 2).min(session_len - CLIP_FRAMES)
    };
    Some(start)
}

pub fn filter_and_crop(segments: &[Segment], session: &Session) -> Result<Vec<Clip>> {
    let mut out = Vec::new();
    for seg in segments {
        if let Some(start) = clip_start(*seg, session.frames.len()) {
            out.push(session.clip(start)?);
        } else if (MIN_SEGMENT..=MAX_SEGMENT).contains(&seg.len()) {
            log::warn!(
                "segment [{}, {}) of {} cannot be widened to {CLIP_FRAMES} frames; dropped",
                seg.start,
                seg.end,
                session.id
            );
        }
    }
    Ok(out)
}

/// Clips plus the intermediate curves for one session.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub energy: Vec<f64>,
    pub smoothed: Vec<f64>,
    pub segments: Vec<Segment>,
    pub clips: Vec<Clip>,
}

/// Runs all four steps on one session. The clustering rng is seeded from
/// `seed` and the session seed.
///
/// A session whose object occupies fewer than `k` distinct positions is
/// clustered with k reduced to that count; with fewer than two distinct
/// positions it has no motion and yields no clips.
pub fn segment_session(session: &Session, cfg: &SegmentConfig, seed: u64) -> Result<Segmentation> {
    cfg.validate()?;
    let positions: Vec<Vec3> = session.frames.iter().map(|f| f.object_pos).collect();
    let distinct = count_distinct(&positions);
    let n = positions.len();
    if distinct < 2 {
        return Ok(Segmentation {
            energy: vec![0.0; n],
            smoothed: vec![0.0; n],
            segments: Vec::new(),
            clips: Vec::new(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ session.seed));
    let model = cluster_positions(&positions, cfg.k.min(distinct), &mut rng)?;
    let energy = motion_energy(&model.assignments, cfg.window)?;
    let smoothed = smooth(&energy, cfg.sigma)?;
    let segments = extract_segments(&smoothed, cfg.threshold);
    let clips = filter_and_crop(&segments, session)?;
    Ok(Segmentation {
        energy,
        smoothed,
        segments,
        clips,
    })
}

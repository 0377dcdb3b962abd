//! Plain CSV and SVG traces of clips for inspection without a plotting
//! library.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::trajectory::Clip;

pub const CLIP_CSV_HEADER: [&str; 11] = [
    "frame", "obj_x", "obj_y", "obj_z", "hand_x", "hand_y", "hand_z", "rot_x", "rot_y", "rot_z", "rot_w",
];

/// Displacements below this count as no motion when drawing.
const STATIC_EPS: f64 = 1e-9;

const PANEL: f64 = 320.0;
const MARGIN: f64 = 20.0;

fn csv_text(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::invalid(format!("csv: {e}"));
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
}

/// The clip's 90 × 10 feature matrix with a header row and the session
/// frame index in the first column.
pub fn clip_csv(clip: &Clip) -> Result<String> {
    csv_text(
        &CLIP_CSV_HEADER,
        clip.frames().iter().map(|f| {
            let mut row = vec![f.index.to_string()];
            row.extend(f.features().iter().map(|v| v.to_string()));
            row
        }),
    )
}

/// Smoothed and raw motion energy of one session, one row per frame.
pub fn energy_csv(energy: &[f64], smoothed: &[f64]) -> Result<String> {
    if energy.len() != smoothed.len() {
        return Err(Error::invalid("energy and smoothed curves differ in length"));
    }
    csv_text(
        &["frame", "energy", "smoothed"],
        energy
            .iter()
            .zip(smoothed)
            .enumerate()
            .map(|(i, (e, s))| vec![i.to_string(), e.to_string(), s.to_string()]),
    )
}

struct Panel {
    title: &'static str,
    x0: f64,
    // indices into [x, y, z] for the horizontal and vertical axes
    axes: (usize, usize),
}

fn coords(v: crate::geometry::Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn is_static(path: &[[f64; 3]]) -> bool {
    path.iter()
        .all(|p| (0..3).all(|a| (p[a] - path[0][a]).abs() <= STATIC_EPS))
}

/// Two projections of the object path (top-down XZ and side XY) with the
/// hand path drawn in a second colour. A clip whose object never moves is
/// drawn as one point marker per projection.
pub fn clip_svg(clip: &Clip) -> String {
    let obj: Vec<[f64; 3]> = clip.frames().iter().map(|f| coords(f.object_pos)).collect();
    let hand: Vec<[f64; 3]> = clip.frames().iter().map(|f| coords(f.hand_pos)).collect();
    let panels = [
        Panel {
            title: "top (x, z)",
            x0: 0.0,
            axes: (0, 2),
        },
        Panel {
            title: "side (x, y)",
            x0: PANEL,
            axes: (0, 1),
        },
    ];
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = 2.0 * PANEL,
        h = PANEL
    );
    let _ = writeln!(s, "<title>{}</title>", clip.id());
    let obj_static = is_static(&obj);
    let hand_static = is_static(&hand);
    for p in &panels {
        let (a, b) = p.axes;
        // one scale for both axes so shapes are not distorted
        let pts = obj.iter().chain(if hand_static { [].iter() } else { hand.iter() });
        let (mut lo_a, mut hi_a, mut lo_b, mut hi_b) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for q in pts {
            lo_a = lo_a.min(q[a]);
            hi_a = hi_a.max(q[a]);
            lo_b = lo_b.min(q[b]);
            hi_b = hi_b.max(q[b]);
        }
        let span = (hi_a - lo_a).max(hi_b - lo_b).max(1e-6);
        let scale = (PANEL - 2.0 * MARGIN) / span;
        let (ca, cb) = ((lo_a + hi_a) / 2.0, (lo_b + hi_b) / 2.0);
        let mid = PANEL / 2.0;
        // side view: y up, so flip the vertical axis; top view: z toward the viewer
        let map = |q: &[f64; 3]| (p.x0 + mid + (q[a] - ca) * scale, mid - (q[b] - cb) * scale);
        let _ = writeln!(
            s,
            r##"<g><rect x="{}" y="0" width="{PANEL}" height="{PANEL}" fill="none" stroke="#ccc"/><text x="{}" y="14" font-size="12">{}</text>"##,
            p.x0,
            p.x0 + 4.0,
            p.title
        );
        if !hand_static {
            let _ = writeln!(
                s,
                r##"<polyline class="hand" fill="none" stroke="#d62728" stroke-width="1" points="{}"/>"##,
                polyline_points(hand.iter().map(map))
            );
        }
        if obj_static {
            let (x, y) = map(&obj[0]);
            let _ = writeln!(
                s,
                r##"<circle class="object" cx="{x:.2}" cy="{y:.2}" r="4" fill="#1f77b4"/>"##
            );
        } else {
            let _ = writeln!(
                s,
                r##"<polyline class="object" fill="none" stroke="#1f77b4" stroke-width="2" points="{}"/>"##,
                polyline_points(obj.iter().map(map))
            );
        }
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    s
}

fn polyline_points(pts: impl Iterator<Item = (f64, f64)>) -> String {
    pts.map(|(x, y)| format!("{x:.2},{y:.2}")).collect::<Vec<_>>().join(" ")
}

/// File stem for a clip id; `:` and path separators are not portable.
pub fn clip_file_stem(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Writes `<clip>.csv` and `<clip>.svg` for every clip into `dir` and
/// returns the paths written.
pub fn export_traces(clips: &[Clip], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::with_capacity(2 * clips.len());
    for c in clips {
        let stem = clip_file_stem(&c.id());
        let csv_path = dir.join(format!("{stem}.csv"));
        write_atomic(&csv_path, &clip_csv(c)?)?;
        let svg_path = dir.join(format!("{stem}.svg"));
        write_atomic(&svg_path, &clip_svg(c))?;
        written.push(csv_path);
        written.push(svg_path);
    }
    Ok(written)
}

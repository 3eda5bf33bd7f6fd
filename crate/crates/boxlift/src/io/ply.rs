//! ASCII PLY export for map and cluster inspection: per-vertex position and
//! color, object points colored by a stable id hash, background white.

use std::io::{BufWriter, Write};
use std::path::Path;

use super::FormatError;
use crate::geometry::Vec3;
use crate::scalar::Real;

/// One colored point set in an export.
pub struct PlyPointSet<'a, S: Real> {
    pub points: &'a [Vec3<S>],
    pub color: [u8; 3],
}

pub const BACKGROUND_COLOR: [u8; 3] = [255, 255, 255];

/// Stable, well-spread color for an object id (golden-angle hue walk).
pub fn object_color(object_id: u64) -> [u8; 3] {
    let hue = (object_id as f64 * 137.50776405003785) % 360.0;
    let h = hue / 60.0;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    let (r, g, b) = match h as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    // Lift towards pastel so points stay visible on dark viewers.
    let lift = |v: f64| (64.0 + v * 191.0) as u8;
    [lift(r), lift(g), lift(b)]
}

pub fn write_ply<S: Real>(
    path: &Path,
    sets: &[PlyPointSet<'_, S>],
    comments: &[String],
) -> Result<(), FormatError> {
    let total: usize = sets.iter().map(|s| s.points.len()).sum();
    let file = std::fs::File::create(path).map_err(|e| FormatError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| FormatError::io(path, e);

    writeln!(w, "ply").map_err(io_err)?;
    writeln!(w, "format ascii 1.0").map_err(io_err)?;
    for c in comments {
        writeln!(w, "comment {c}").map_err(io_err)?;
    }
    writeln!(w, "element vertex {total}").map_err(io_err)?;
    for prop in ["x", "y", "z"] {
        writeln!(w, "property float {prop}").map_err(io_err)?;
    }
    for prop in ["red", "green", "blue"] {
        writeln!(w, "property uchar {prop}").map_err(io_err)?;
    }
    writeln!(w, "end_header").map_err(io_err)?;

    for set in sets {
        let [r, g, b] = set.color;
        for p in set.points {
            writeln!(
                w,
                "{:.6} {:.6} {:.6} {r} {g} {b}",
                p.x.to_f64().unwrap_or(0.0),
                p.y.to_f64().unwrap_or(0.0),
                p.z.to_f64().unwrap_or(0.0),
            )
            .map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

//! Ground-truth boxes: one per line, scope then class then world-frame box.
//! Scope is `*` for sequence-global boxes or a scan id.
//!
//! ```text
//! * 3 min_x min_y min_z max_x max_y max_z
//! ```

use std::io::Write;
use std::path::Path;

use super::{data_lines, parse_reals, FormatError};
use crate::geometry::{Aabb3, Frame, Vec3};
use crate::scalar::{real, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GtScope {
    Global,
    Scan(u64),
}

#[derive(Debug, Clone)]
pub struct GroundTruthBox<S: Real> {
    pub scope: GtScope,
    pub class_id: u32,
    pub bounding_box: Aabb3<S>,
}

pub fn read_ground_truth<S: Real>(path: &Path) -> Result<Vec<GroundTruthBox<S>>, FormatError> {
    let mut boxes = Vec::new();
    for (line_no, line) in data_lines(path)? {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 8 {
            return Err(FormatError::malformed(
                path,
                line_no,
                format!("expected 8 fields (scope class box), found {}", tokens.len()),
            ));
        }
        let scope = if tokens[0] == "*" {
            GtScope::Global
        } else {
            GtScope::Scan(tokens[0].parse().map_err(|_| {
                FormatError::malformed(path, line_no, format!("invalid scope '{}'", tokens[0]))
            })?)
        };
        let class_id: u32 = tokens[1].parse().map_err(|_| {
            FormatError::malformed(path, line_no, format!("invalid class id '{}'", tokens[1]))
        })?;
        let vals = parse_reals(path, line_no, &tokens[2..], 6, "box corners")?;
        if vals[0] > vals[3] || vals[1] > vals[4] || vals[2] > vals[5] {
            return Err(FormatError::malformed(path, line_no, "box min exceeds max"));
        }
        boxes.push(GroundTruthBox {
            scope,
            class_id,
            bounding_box: Aabb3::new(
                Vec3::new(real::<S>(vals[0]), real::<S>(vals[1]), real::<S>(vals[2])),
                Vec3::new(real::<S>(vals[3]), real::<S>(vals[4]), real::<S>(vals[5])),
                Frame::World,
            ),
        });
    }
    Ok(boxes)
}

pub fn write_ground_truth<S: Real>(
    path: &Path,
    boxes: &[GroundTruthBox<S>],
) -> Result<(), FormatError> {
    let mut out = String::from("# scope class min_x min_y min_z max_x max_y max_z\n");
    let f = |v: S| format!("{:.6}", v.to_f64().unwrap_or(0.0));
    for b in boxes {
        let scope = match b.scope {
            GtScope::Global => "*".to_string(),
            GtScope::Scan(id) => id.to_string(),
        };
        out.push_str(&format!(
            "{scope} {} {} {} {} {} {} {}\n",
            b.class_id,
            f(b.bounding_box.min.x),
            f(b.bounding_box.min.y),
            f(b.bounding_box.min.z),
            f(b.bounding_box.max.x),
            f(b.bounding_box.max.y),
            f(b.bounding_box.max.z),
        ));
    }
    let mut file = std::fs::File::create(path).map_err(|e| FormatError::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| FormatError::io(path, e))
}

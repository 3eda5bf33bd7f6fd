//! Registry export: one record per object, deterministic field order, six
//! decimal places.
//!
//! ```text
//! object: id class_id cx cy cz min_x min_y min_z max_x max_y max_z observations points
//! ```

use std::io::Write;
use std::path::Path;

use super::{data_lines, parse_reals, FormatError};
use crate::geometry::{Aabb3, Frame, Vec3};
use crate::layer2::SnapshotRow;
use crate::scalar::{real, Real};

/// Write snapshot rows, with optional provenance lines emitted as comments.
pub fn write_registry<S: Real>(
    path: &Path,
    rows: &[SnapshotRow<S>],
    provenance: &[String],
) -> Result<(), FormatError> {
    let mut out = String::new();
    out.push_str("# registry v1: object: id class cx cy cz min_x min_y min_z max_x max_y max_z observations points\n");
    for line in provenance {
        out.push_str(&format!("# {line}\n"));
    }
    let f = |v: S| format!("{:.6}", v.to_f64().unwrap_or(0.0));
    for row in rows {
        out.push_str(&format!(
            "object: {} {} {} {} {} {} {} {} {} {} {} {} {}\n",
            row.object_id,
            row.class_id,
            f(row.centroid.x),
            f(row.centroid.y),
            f(row.centroid.z),
            f(row.bounding_box.min.x),
            f(row.bounding_box.min.y),
            f(row.bounding_box.min.z),
            f(row.bounding_box.max.x),
            f(row.bounding_box.max.y),
            f(row.bounding_box.max.z),
            row.observation_count,
            row.point_count,
        ));
    }
    let mut file = std::fs::File::create(path).map_err(|e| FormatError::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| FormatError::io(path, e))
}

pub fn read_registry<S: Real>(path: &Path) -> Result<Vec<SnapshotRow<S>>, FormatError> {
    let mut rows = Vec::new();
    for (line_no, line) in data_lines(path)? {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.first() != Some(&"object:") {
            return Err(FormatError::malformed(
                path,
                line_no,
                format!("expected 'object:' record, found '{}'", tokens.first().unwrap_or(&"")),
            ));
        }
        let vals = parse_reals(path, line_no, &tokens[1..], 13, "registry record")?;
        rows.push(SnapshotRow {
            object_id: vals[0] as u64,
            class_id: vals[1] as u32,
            centroid: Vec3::new(real::<S>(vals[2]), real::<S>(vals[3]), real::<S>(vals[4])),
            bounding_box: Aabb3::new(
                Vec3::new(real::<S>(vals[5]), real::<S>(vals[6]), real::<S>(vals[7])),
                Vec3::new(real::<S>(vals[8]), real::<S>(vals[9]), real::<S>(vals[10])),
                Frame::World,
            ),
            observation_count: vals[11] as u64,
            point_count: vals[12] as usize,
        });
    }
    Ok(rows)
}

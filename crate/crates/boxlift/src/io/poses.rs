//! Pose trajectory files: one LiDAR→world transform per non-empty line as 12
//! reals, row-major `[R|t]`. Line order assigns scan ids starting at 0.

use std::io::Write;
use std::path::Path;

use super::{data_lines, parse_reals, FormatError};
use crate::geometry::{Mat3, RigidTransform, Vec3};
use crate::layer2::Pose;
use crate::scalar::{real, Real};

pub fn read_poses<S: Real>(path: &Path) -> Result<Vec<Pose<S>>, FormatError> {
    let mut poses = Vec::new();
    for (line_no, line) in data_lines(path)? {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let vals = parse_reals(path, line_no, &tokens, 12, "pose")?;
        let rot = Mat3::new([
            [vals[0], vals[1], vals[2]],
            [vals[4], vals[5], vals[6]],
            [vals[8], vals[9], vals[10]],
        ]);
        let det = rot.det();
        if det < 0.0 {
            return Err(FormatError::ImproperRotation {
                path: path.display().to_string(),
                line: line_no,
                det,
            });
        }
        let deviation = rot.orthonormality_deviation();
        if deviation > 1e-3 {
            return Err(FormatError::NonOrthonormal {
                path: path.display().to_string(),
                line: line_no,
                deviation,
            });
        }
        let rot = rot.orthonormalized();
        let rot_s = Mat3::new([
            [real(rot.m[0][0]), real(rot.m[0][1]), real(rot.m[0][2])],
            [real(rot.m[1][0]), real(rot.m[1][1]), real(rot.m[1][2])],
            [real(rot.m[2][0]), real(rot.m[2][1]), real(rot.m[2][2])],
        ]);
        let t = Vec3::new(real(vals[3]), real(vals[7]), real(vals[11]));
        poses.push(Pose {
            scan_id: poses.len() as u64,
            t_wl: RigidTransform::from_parts(rot_s, t),
        });
    }
    Ok(poses)
}

pub fn write_poses<S: Real>(path: &Path, poses: &[RigidTransform<S>]) -> Result<(), FormatError> {
    let mut out = String::new();
    for t in poses {
        let mut fields = Vec::with_capacity(12);
        for i in 0..3 {
            for j in 0..3 {
                fields.push(format!("{:.9}", t.rotation.m[i][j].to_f64().unwrap_or(0.0)));
            }
            let tr = [t.translation.x, t.translation.y, t.translation.z];
            fields.push(format!("{:.9}", tr[i].to_f64().unwrap_or(0.0)));
        }
        out.push_str(&fields.join(" "));
        out.push('\n');
    }
    let mut file = std::fs::File::create(path).map_err(|e| FormatError::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| FormatError::io(path, e))
}

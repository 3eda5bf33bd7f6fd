//! Camera calibration: the native single-`K·[R|t]` format plus a converter
//! from KITTI-style calib files.
//!
//! Native format, one key per line:
//!
//! ```text
//! K: fx fy cx cy
//! size: width height
//! Tr: r11 r12 r13 tx r21 r22 r23 ty r31 r32 r33 tz
//! ```

use std::io::Write;
use std::path::Path;

use super::{data_lines, parse_reals, FormatError};
use crate::geometry::{CameraModel, Mat3, RigidTransform, Vec3};
use crate::scalar::{real, Real};

const ROTATION_READ_TOLERANCE: f64 = 1e-3;

/// Validate a parsed rotation: proper within read tolerance, then
/// re-orthonormalized so downstream invariants hold exactly.
fn accept_rotation(
    path: &Path,
    line: usize,
    rot: Mat3<f64>,
) -> Result<Mat3<f64>, FormatError> {
    let det = rot.det();
    if det < 0.0 {
        return Err(FormatError::ImproperRotation { path: path.display().to_string(), line, det });
    }
    let deviation = rot.orthonormality_deviation();
    if deviation > ROTATION_READ_TOLERANCE {
        return Err(FormatError::NonOrthonormal {
            path: path.display().to_string(),
            line,
            deviation,
        });
    }
    Ok(rot.orthonormalized())
}

fn mat_from_12(vals: &[f64]) -> (Mat3<f64>, Vec3<f64>) {
    let rot = Mat3::new([
        [vals[0], vals[1], vals[2]],
        [vals[4], vals[5], vals[6]],
        [vals[8], vals[9], vals[10]],
    ]);
    let t = Vec3::new(vals[3], vals[7], vals[11]);
    (rot, t)
}

/// Intrinsics `[fx, fy, cx, cy]` parsed as f64 before scalar conversion.
type Intrinsics = [f64; 4];

fn convert_model<S: Real>(
    k: Intrinsics,
    width: u32,
    height: u32,
    rot: Mat3<f64>,
    t: Vec3<f64>,
) -> CameraModel<S> {
    let rows = rot.m;
    let rot_s = Mat3::new([
        [real(rows[0][0]), real(rows[0][1]), real(rows[0][2])],
        [real(rows[1][0]), real(rows[1][1]), real(rows[1][2])],
        [real(rows[2][0]), real(rows[2][1]), real(rows[2][2])],
    ]);
    let t_s = Vec3::new(real(t.x), real(t.y), real(t.z));
    CameraModel::new(
        real(k[0]),
        real(k[1]),
        real(k[2]),
        real(k[3]),
        width,
        height,
        RigidTransform::from_parts(rot_s, t_s),
    )
}

pub fn read_calibration<S: Real>(path: &Path) -> Result<CameraModel<S>, FormatError> {
    let mut k: Option<(usize, Vec<f64>)> = None;
    let mut size: Option<(usize, Vec<f64>)> = None;
    let mut tr: Option<(usize, Vec<f64>)> = None;

    for (line_no, line) in data_lines(path)? {
        let mut tokens = line.split_whitespace();
        let Some(key) = tokens.next() else { continue };
        let rest: Vec<&str> = tokens.collect();
        match key {
            "K:" => k = Some((line_no, parse_reals(path, line_no, &rest, 4, "K")?)),
            "size:" => size = Some((line_no, parse_reals(path, line_no, &rest, 2, "size")?)),
            "Tr:" => tr = Some((line_no, parse_reals(path, line_no, &rest, 12, "Tr")?)),
            other => {
                return Err(FormatError::malformed(
                    path,
                    line_no,
                    format!("unknown calibration key '{other}'"),
                ))
            }
        }
    }

    let (k_line, k) = k.ok_or_else(|| FormatError::missing_key(path, "K"))?;
    let (size_line, size) = size.ok_or_else(|| FormatError::missing_key(path, "size"))?;
    let (tr_line, tr) = tr.ok_or_else(|| FormatError::missing_key(path, "Tr"))?;

    let (fx, fy, cx, cy) = (k[0], k[1], k[2], k[3]);
    if fx <= 0.0 || fy <= 0.0 {
        return Err(FormatError::malformed(path, k_line, "focal lengths must be positive"));
    }
    if size[0] < 1.0 || size[1] < 1.0 || size[0].fract() != 0.0 || size[1].fract() != 0.0 {
        return Err(FormatError::malformed(path, size_line, "size must be positive integers"));
    }

    let (rot, t) = mat_from_12(&tr);
    let rot = accept_rotation(path, tr_line, rot)?;
    Ok(convert_model([fx, fy, cx, cy], size[0] as u32, size[1] as u32, rot, t))
}

pub fn write_calibration<S: Real>(path: &Path, cam: &CameraModel<S>) -> Result<(), FormatError> {
    let mut out = String::new();
    let f = |v: S| format!("{:.9}", v.to_f64().unwrap_or(0.0));
    out.push_str(&format!("K: {} {} {} {}\n", f(cam.fx), f(cam.fy), f(cam.cx), f(cam.cy)));
    out.push_str(&format!("size: {} {}\n", cam.width, cam.height));
    out.push_str("Tr:");
    for i in 0..3 {
        for j in 0..3 {
            out.push_str(&format!(" {}", f(cam.extrinsics.rotation.m[i][j])));
        }
        let t = [cam.extrinsics.translation.x, cam.extrinsics.translation.y, cam.extrinsics.translation.z];
        out.push_str(&format!(" {}", f(t[i])));
    }
    out.push('\n');
    let mut file = std::fs::File::create(path).map_err(|e| FormatError::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| FormatError::io(path, e))
}

/// Parsed KITTI-style calib file: rectified projection matrices `P0..P3`,
/// optional rectification rotation, and the LiDAR-to-camera transform.
#[derive(Debug)]
pub struct KittiCalib {
    pub projections: Vec<(String, [f64; 12])>,
    pub r0_rect: Option<[f64; 9]>,
    pub tr_velo_to_cam: [f64; 12],
}

pub fn read_kitti_calib(path: &Path) -> Result<KittiCalib, FormatError> {
    let mut projections = Vec::new();
    let mut r0: Option<[f64; 9]> = None;
    let mut tr: Option<[f64; 12]> = None;
    for (line_no, line) in data_lines(path)? {
        let mut tokens = line.split_whitespace();
        let Some(key) = tokens.next() else { continue };
        let key = key.trim_end_matches(':');
        let rest: Vec<&str> = tokens.collect();
        match key {
            _ if key.starts_with('P') => {
                let vals = parse_reals(path, line_no, &rest, 12, key)?;
                projections.push((key.to_string(), vals.try_into().unwrap()));
            }
            "R0_rect" | "R_rect" => {
                let vals = parse_reals(path, line_no, &rest, 9, key)?;
                r0 = Some(vals.try_into().unwrap());
            }
            "Tr_velo_to_cam" | "Tr_velo_cam" | "Tr" => {
                let vals = parse_reals(path, line_no, &rest, 12, key)?;
                tr = Some(vals.try_into().unwrap());
            }
            // KITTI files carry extra keys (Tr_imu_to_velo, ...); skip them.
            _ => {}
        }
    }
    Ok(KittiCalib {
        projections,
        r0_rect: r0,
        tr_velo_to_cam: tr.ok_or_else(|| FormatError::missing_key(path, "Tr_velo_to_cam"))?,
    })
}

/// Compose a KITTI calib file into the native single-`K·[R|t]` model.
///
/// For the rectified projection `P = [K | p4]`, the image point of a LiDAR
/// point `p` is `P · R0 · Tr_velo_to_cam · [p;1]`. Folding `p4` through
/// `K⁻¹` gives an extra camera-frame translation `b = K⁻¹·p4`, so the model
/// becomes `K`, `R = R0·R_tr`, `t = R0·t_tr + b` with identical projections.
pub fn convert_kitti_calib<S: Real>(
    path: &Path,
    projection_key: &str,
    width: u32,
    height: u32,
) -> Result<CameraModel<S>, FormatError> {
    let calib = read_kitti_calib(path)?;
    let p = calib
        .projections
        .iter()
        .find(|(k, _)| k == projection_key)
        .map(|(_, v)| *v)
        .ok_or_else(|| FormatError::missing_key(path, projection_key))?;

    // Rectified projections have no skew and a clean third row.
    let off_diag = p[1].abs().max(p[4].abs()).max(p[8].abs()).max(p[9].abs());
    if off_diag > 1e-6 || (p[10] - 1.0).abs() > 1e-6 {
        return Err(FormatError::malformed(
            path,
            0,
            format!("projection {projection_key} is not a rectified pinhole matrix"),
        ));
    }
    let (fx, cx, p4x) = (p[0], p[2], p[3]);
    let (fy, cy, p4y) = (p[5], p[6], p[7]);
    let p4z = p[11];
    if fx <= 0.0 || fy <= 0.0 {
        return Err(FormatError::malformed(path, 0, "projection has non-positive focal length"));
    }
    // b = K⁻¹ · p4 for upper-triangular K.
    let b = Vec3::new((p4x - cx * p4z) / fx, (p4y - cy * p4z) / fy, p4z);

    let (r_tr, t_tr) = mat_from_12(&calib.tr_velo_to_cam);
    let r0 = match calib.r0_rect {
        Some(v) => Mat3::new([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]]),
        None => Mat3::identity(),
    };
    let rot = accept_rotation(path, 0, r0.mul_mat(&r_tr))?;
    let t = r0.mul_vec(t_tr) + b;
    Ok(convert_model([fx, fy, cx, cy], width, height, rot, t))
}

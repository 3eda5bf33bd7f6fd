//! LiDAR scan binaries: little-endian 32-bit float quadruplets
//! `(x, y, z, reflectance)`, reflectance discarded on read.

use std::io::Write;
use std::path::Path;

use super::FormatError;
use crate::geometry::{Frame, PointCloud, Vec3};
use crate::scalar::{real, Real};

#[derive(Debug)]
pub struct ScanReadResult<S: Real> {
    pub cloud: PointCloud<S>,
    /// Points dropped because a coordinate was NaN or infinite.
    pub dropped: usize,
}

/// Read a scan binary into a LiDAR-frame cloud, preserving point order.
///
/// A file length that is not a multiple of 16 bytes is a truncation error
/// reported at the last whole-point boundary. Points with non-finite
/// coordinates are dropped and counted, never silently kept.
pub fn read_scan<S: Real>(path: &Path) -> Result<ScanReadResult<S>, FormatError> {
    let bytes = std::fs::read(path).map_err(|e| FormatError::io(path, e))?;
    let len = bytes.len() as u64;
    if !len.is_multiple_of(16) {
        return Err(FormatError::TruncatedScan {
            path: path.display().to_string(),
            offset: len - len % 16,
            len,
        });
    }
    let mut points = Vec::with_capacity(bytes.len() / 16);
    let mut dropped = 0usize;
    for quad in bytes.chunks_exact(16) {
        let x = f32::from_le_bytes(quad[0..4].try_into().unwrap());
        let y = f32::from_le_bytes(quad[4..8].try_into().unwrap());
        let z = f32::from_le_bytes(quad[8..12].try_into().unwrap());
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            dropped += 1;
            continue;
        }
        points.push(Vec3::new(real::<S>(x as f64), real::<S>(y as f64), real::<S>(z as f64)));
    }
    Ok(ScanReadResult { cloud: PointCloud::new(points, Frame::Lidar), dropped })
}

/// Write a cloud as a scan binary with constant reflectance.
pub fn write_scan<S: Real>(path: &Path, cloud: &PointCloud<S>) -> Result<(), FormatError> {
    let mut buf = Vec::with_capacity(cloud.len() * 16);
    for p in &cloud.points {
        for v in [p.x, p.y, p.z] {
            buf.extend_from_slice(&(v.to_f64().unwrap_or(0.0) as f32).to_le_bytes());
        }
        buf.extend_from_slice(&0.5f32.to_le_bytes());
    }
    let mut file = std::fs::File::create(path).map_err(|e| FormatError::io(path, e))?;
    file.write_all(&buf).map_err(|e| FormatError::io(path, e))
}

//! File formats: LiDAR scan binaries, calibration, pose trajectories,
//! detection records (raw and decoded), registry and ground-truth exports,
//! PLY dumps, and the sequence manifest tying them together.
//!
//! Text formats are UTF-8 and whitespace-separated; lines starting with `#`
//! are comments. Every malformed input yields a structured error naming the
//! file, the offending line or byte offset, and what was expected.

mod calib;
mod detections;
mod gt;
mod manifest;
mod ply;
mod poses;
mod registry;
mod scan;

pub use calib::{convert_kitti_calib, read_calibration, write_calibration, KittiCalib};
pub use detections::{
    read_detections, write_decoded_detections, write_raw_detections, DetectionMode,
    FrameDetections,
};
pub use gt::{read_ground_truth, write_ground_truth, GroundTruthBox, GtScope};
pub use manifest::{read_manifest, write_manifest, ManifestEntry, SequenceManifest};
pub use ply::{object_color, write_ply, PlyPointSet, BACKGROUND_COLOR};
pub use poses::{read_poses, write_poses};
pub use registry::{read_registry, write_registry};
pub use scan::{read_scan, write_scan, ScanReadResult};

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: truncated at byte {offset} (length {len} is not a multiple of 16)")]
    TruncatedScan { path: String, offset: u64, len: u64 },
    #[error("{path}:{line}: {message}")]
    Malformed { path: String, line: usize, message: String },
    #[error("{path}: missing required key '{key}'")]
    MissingKey { path: String, key: String },
    #[error("{path}:{line}: improper rotation (determinant {det:.6})")]
    ImproperRotation { path: String, line: usize, det: f64 },
    #[error("{path}:{line}: rotation not orthonormal within 1e-3 (deviation {deviation:.3e})")]
    NonOrthonormal { path: String, line: usize, deviation: f64 },
    #[error("{path}:{line}: RLE runs sum to {got}, expected {expected}")]
    RleSum { path: String, line: usize, got: usize, expected: usize },
    #[error("{path}: prototype blob is {got} bytes, expected {expected}")]
    ProtoBlobSize { path: String, expected: u64, got: u64 },
    #[error("{path}:{line}: referenced path does not exist: {referenced}")]
    MissingReference { path: String, line: usize, referenced: String },
}

impl FormatError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        FormatError::Io { path: path.display().to_string(), source }
    }

    pub(crate) fn malformed(path: &Path, line: usize, message: impl Into<String>) -> Self {
        FormatError::Malformed { path: path.display().to_string(), line, message: message.into() }
    }

    pub(crate) fn missing_key(path: &Path, key: &str) -> Self {
        FormatError::MissingKey { path: path.display().to_string(), key: key.to_string() }
    }
}

/// Data lines of a text file with 1-based line numbers; blank lines and `#`
/// comments are skipped.
pub(crate) fn data_lines(path: &Path) -> Result<Vec<(usize, String)>, FormatError> {
    let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(i, l)| (i, l.to_string()))
        .collect())
}

/// Parse exactly `expected` whitespace-separated reals.
pub(crate) fn parse_reals(
    path: &Path,
    line: usize,
    tokens: &[&str],
    expected: usize,
    what: &str,
) -> Result<Vec<f64>, FormatError> {
    if tokens.len() != expected {
        return Err(FormatError::malformed(
            path,
            line,
            format!("expected {expected} values for {what}, found {}", tokens.len()),
        ));
    }
    tokens
        .iter()
        .map(|t| {
            t.parse::<f64>().map_err(|_| {
                FormatError::malformed(path, line, format!("invalid number '{t}' in {what}"))
            })
        })
        .collect()
}

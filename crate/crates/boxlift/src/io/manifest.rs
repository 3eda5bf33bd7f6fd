//! Sequence manifest: the per-run table of scans, detection records and pose
//! rows, plus shared calibration and frame dimensions.
//!
//! ```text
//! calib: calib.txt
//! poses: poses.txt
//! size: 640 480
//! mode: decoded
//! scan: 0 scans/000000.bin dets/000000.txt 0
//! scan: 1 scans/000001.bin - 1
//! ```
//!
//! Paths are relative to the manifest's directory; `-` marks a scan without
//! a detection record (the detector produced nothing for that frame).

use std::io::Write;
use std::path::{Path, PathBuf};

use super::{data_lines, parse_reals, DetectionMode, FormatError};

#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub scan_id: u64,
    pub scan_path: PathBuf,
    pub detections_path: Option<PathBuf>,
    pub pose_row: usize,
}

#[derive(Debug, Clone)]
pub struct SequenceManifest {
    pub calib_path: PathBuf,
    pub poses_path: PathBuf,
    pub frame_width: u32,
    pub frame_height: u32,
    pub mode: DetectionMode,
    pub entries: Vec<ManifestEntry>,
}

/// Load and validate a manifest: scan ids must be strictly increasing and
/// every referenced path must exist.
pub fn read_manifest(path: &Path) -> Result<SequenceManifest, FormatError> {
    let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let mut calib: Option<PathBuf> = None;
    let mut poses: Option<PathBuf> = None;
    let mut size: Option<(u32, u32)> = None;
    let mut mode: Option<DetectionMode> = None;
    let mut entries: Vec<(usize, ManifestEntry)> = Vec::new();

    for (line_no, line) in data_lines(path)? {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let Some(&key) = tokens.first() else { continue };
        match key {
            "calib:" => calib = Some(dir.join(expect_one(path, line_no, &tokens, "calib")?)),
            "poses:" => poses = Some(dir.join(expect_one(path, line_no, &tokens, "poses")?)),
            "size:" => {
                let vals = parse_reals(path, line_no, &tokens[1..], 2, "size")?;
                size = Some((vals[0] as u32, vals[1] as u32));
            }
            "mode:" => {
                let value = expect_one(path, line_no, &tokens, "mode")?;
                mode = Some(
                    value
                        .parse()
                        .map_err(|e: String| FormatError::malformed(path, line_no, e))?,
                );
            }
            "scan:" => {
                if tokens.len() != 5 {
                    return Err(FormatError::malformed(
                        path,
                        line_no,
                        format!("scan entries need 4 fields (id scan dets pose_row), found {}", tokens.len() - 1),
                    ));
                }
                let scan_id: u64 = tokens[1].parse().map_err(|_| {
                    FormatError::malformed(path, line_no, format!("invalid scan id '{}'", tokens[1]))
                })?;
                let pose_row: usize = tokens[4].parse().map_err(|_| {
                    FormatError::malformed(path, line_no, format!("invalid pose row '{}'", tokens[4]))
                })?;
                let detections_path =
                    if tokens[3] == "-" { None } else { Some(dir.join(tokens[3])) };
                entries.push((
                    line_no,
                    ManifestEntry {
                        scan_id,
                        scan_path: dir.join(tokens[2]),
                        detections_path,
                        pose_row,
                    },
                ));
            }
            other => {
                return Err(FormatError::malformed(
                    path,
                    line_no,
                    format!("unknown manifest key '{other}'"),
                ))
            }
        }
    }

    let calib_path = calib.ok_or_else(|| FormatError::missing_key(path, "calib"))?;
    let poses_path = poses.ok_or_else(|| FormatError::missing_key(path, "poses"))?;
    let (frame_width, frame_height) = size.ok_or_else(|| FormatError::missing_key(path, "size"))?;
    let mode = mode.ok_or_else(|| FormatError::missing_key(path, "mode"))?;

    let mut last_id: Option<u64> = None;
    for (line_no, entry) in &entries {
        if let Some(prev) = last_id {
            if entry.scan_id <= prev {
                return Err(FormatError::malformed(
                    path,
                    *line_no,
                    format!("scan ids must be strictly increasing ({} after {prev})", entry.scan_id),
                ));
            }
        }
        last_id = Some(entry.scan_id);
    }

    let check = |line_no: usize, p: &Path| -> Result<(), FormatError> {
        if p.exists() {
            Ok(())
        } else {
            Err(FormatError::MissingReference {
                path: path.display().to_string(),
                line: line_no,
                referenced: p.display().to_string(),
            })
        }
    };
    check(0, &calib_path)?;
    check(0, &poses_path)?;
    for (line_no, entry) in &entries {
        check(*line_no, &entry.scan_path)?;
        if let Some(dets) = &entry.detections_path {
            check(*line_no, dets)?;
        }
    }

    Ok(SequenceManifest {
        calib_path,
        poses_path,
        frame_width,
        frame_height,
        mode,
        entries: entries.into_iter().map(|(_, e)| e).collect(),
    })
}

fn expect_one<'a>(
    path: &Path,
    line_no: usize,
    tokens: &[&'a str],
    what: &str,
) -> Result<&'a str, FormatError> {
    if tokens.len() != 2 {
        return Err(FormatError::malformed(
            path,
            line_no,
            format!("'{what}:' takes exactly one value, found {}", tokens.len() - 1),
        ));
    }
    Ok(tokens[1])
}

/// Write a manifest with paths relative to its directory.
pub fn write_manifest(
    path: &Path,
    calib: &str,
    poses: &str,
    frame_width: u32,
    frame_height: u32,
    mode: DetectionMode,
    entries: &[(u64, String, Option<String>, usize)],
) -> Result<(), FormatError> {
    let mut out = String::from("# sequence manifest\n");
    out.push_str(&format!("calib: {calib}\n"));
    out.push_str(&format!("poses: {poses}\n"));
    out.push_str(&format!("size: {frame_width} {frame_height}\n"));
    out.push_str(&format!("mode: {mode}\n"));
    for (id, scan, dets, pose_row) in entries {
        let dets = dets.as_deref().unwrap_or("-");
        out.push_str(&format!("scan: {id} {scan} {dets} {pose_row}\n"));
    }
    let mut file = std::fs::File::create(path).map_err(|e| FormatError::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| FormatError::io(path, e))
}

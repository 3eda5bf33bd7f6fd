//! Per-frame detection records.
//!
//! Decoded mode carries final detections with run-length-encoded masks:
//!
//! ```text
//! mode: decoded
//! size: 640 480
//! det: class_id confidence min_x min_y max_x max_y n_runs r1 r2 ... rn
//! ```
//!
//! Raw mode carries detector head records plus a prototype blob of exactly
//! 32·160·160 little-endian f32 values (map-major, row-major):
//!
//! ```text
//! mode: raw
//! protos: relative/path/to/protos.bin
//! det: cx cy w h c0 ... c79 w0 ... w31
//! ```

use std::io::Write;
use std::path::{Path, PathBuf};

use super::{data_lines, parse_reals, FormatError};
use crate::detect::{
    Box2, Detection2D, PrototypeSet, RawDetection, CLASS_COUNT, PROTO_COUNT, PROTO_SIDE,
};
use crate::mask::BinaryMask;
use crate::scalar::{real, Real};

pub const PROTO_BLOB_BYTES: u64 = (PROTO_COUNT * PROTO_SIDE * PROTO_SIDE * 4) as u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionMode {
    Raw,
    Decoded,
}

impl std::str::FromStr for DetectionMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw" => Ok(DetectionMode::Raw),
            "decoded" => Ok(DetectionMode::Decoded),
            other => Err(format!("unknown detection mode '{other}' (expected raw|decoded)")),
        }
    }
}

impl std::fmt::Display for DetectionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DetectionMode::Raw => write!(f, "raw"),
            DetectionMode::Decoded => write!(f, "decoded"),
        }
    }
}

/// One frame's detection inputs, in either mode.
#[derive(Debug)]
pub enum FrameDetections<S: Real> {
    /// Final detections, masks already expanded to frame size.
    Decoded { frame_w: u32, frame_h: u32, detections: Vec<Detection2D<S>> },
    /// Raw head records; the caller runs NMS and mask assembly.
    Raw { detections: Vec<RawDetection<S>>, protos: PrototypeSet<S> },
}

/// Read a detection record file. `protos_override` replaces the `protos:`
/// path named inside a raw-mode file.
pub fn read_detections<S: Real>(
    path: &Path,
    protos_override: Option<&Path>,
) -> Result<FrameDetections<S>, FormatError> {
    let lines = data_lines(path)?;
    let mut mode: Option<DetectionMode> = None;
    let mut size: Option<(u32, u32)> = None;
    let mut protos_path: Option<PathBuf> = None;
    let mut det_lines: Vec<(usize, Vec<&str>)> = Vec::new();

    let parsed: Vec<(usize, Vec<String>)> = lines
        .iter()
        .map(|(n, l)| (*n, l.split_whitespace().map(str::to_string).collect()))
        .collect();
    for (line_no, tokens) in &parsed {
        let Some(key) = tokens.first() else { continue };
        let rest: Vec<&str> = tokens[1..].iter().map(String::as_str).collect();
        match key.as_str() {
            "mode:" => {
                let value = rest.first().copied().unwrap_or("");
                mode = Some(value.parse().map_err(|e: String| {
                    FormatError::malformed(path, *line_no, e)
                })?);
            }
            "size:" => {
                let vals = parse_reals(path, *line_no, &rest, 2, "size")?;
                size = Some((vals[0] as u32, vals[1] as u32));
            }
            "protos:" => {
                let value = rest.first().copied().unwrap_or("");
                protos_path = Some(path.parent().unwrap_or(Path::new(".")).join(value));
            }
            "det:" => det_lines.push((*line_no, rest)),
            other => {
                return Err(FormatError::malformed(
                    path,
                    *line_no,
                    format!("unknown detection key '{other}'"),
                ))
            }
        }
    }

    match mode.ok_or_else(|| FormatError::missing_key(path, "mode"))? {
        DetectionMode::Decoded => {
            let (w, h) = size.ok_or_else(|| FormatError::missing_key(path, "size"))?;
            let mut detections = Vec::with_capacity(det_lines.len());
            for (line_no, tokens) in det_lines {
                detections.push(parse_decoded_line(path, line_no, &tokens, w, h)?);
            }
            Ok(FrameDetections::Decoded { frame_w: w, frame_h: h, detections })
        }
        DetectionMode::Raw => {
            let blob_path = match protos_override {
                Some(p) => p.to_path_buf(),
                None => protos_path.ok_or_else(|| FormatError::missing_key(path, "protos"))?,
            };
            let protos = read_prototype_blob(&blob_path)?;
            let mut detections = Vec::with_capacity(det_lines.len());
            for (line_no, tokens) in det_lines {
                detections.push(parse_raw_line(path, line_no, &tokens)?);
            }
            Ok(FrameDetections::Raw { detections, protos })
        }
    }
}

fn parse_decoded_line<S: Real>(
    path: &Path,
    line_no: usize,
    tokens: &[&str],
    frame_w: u32,
    frame_h: u32,
) -> Result<Detection2D<S>, FormatError> {
    if tokens.len() < 7 {
        return Err(FormatError::malformed(
            path,
            line_no,
            format!("decoded detection needs at least 7 fields, found {}", tokens.len()),
        ));
    }
    let head = parse_reals(path, line_no, &tokens[..7], 7, "detection header")?;
    let class_id = head[0] as u32;
    if head[0].fract() != 0.0 || class_id >= CLASS_COUNT as u32 {
        return Err(FormatError::malformed(
            path,
            line_no,
            format!("class_id must be an integer in [0,{CLASS_COUNT}), found {}", tokens[0]),
        ));
    }
    let confidence = head[1];
    if !(0.0..=1.0).contains(&confidence) {
        return Err(FormatError::malformed(path, line_no, "confidence must be in [0,1]"));
    }
    let n_runs = head[6] as usize;
    if head[6].fract() != 0.0 || tokens.len() != 7 + n_runs {
        return Err(FormatError::malformed(
            path,
            line_no,
            format!("expected {n_runs} RLE runs after header, found {}", tokens.len() - 7),
        ));
    }
    let mut runs = Vec::with_capacity(n_runs);
    for t in &tokens[7..] {
        let v: usize = t.parse().map_err(|_| {
            FormatError::malformed(path, line_no, format!("invalid RLE run '{t}'"))
        })?;
        runs.push(v);
    }
    let mask = BinaryMask::from_rle(frame_w, frame_h, &runs).map_err(|e| match e {
        crate::mask::MaskError::RleSum { got, expected } => FormatError::RleSum {
            path: path.display().to_string(),
            line: line_no,
            got,
            expected,
        },
    })?;
    let pixel_box = Box2::new(
        real::<S>(head[2]),
        real::<S>(head[3]),
        real::<S>(head[4]),
        real::<S>(head[5]),
    )
    .clamped(frame_w, frame_h);
    Ok(Detection2D { pixel_box, class_id, confidence: real(confidence), mask })
}

fn parse_raw_line<S: Real>(
    path: &Path,
    line_no: usize,
    tokens: &[&str],
) -> Result<RawDetection<S>, FormatError> {
    let expected = 4 + CLASS_COUNT + PROTO_COUNT;
    let vals = parse_reals(path, line_no, tokens, expected, "raw detection")?;
    let confidences: Vec<S> = vals[4..4 + CLASS_COUNT].iter().map(|&v| real(v)).collect();
    let weights: Vec<S> = vals[4 + CLASS_COUNT..].iter().map(|&v| real(v)).collect();
    RawDetection::new(real(vals[0]), real(vals[1]), real(vals[2]), real(vals[3]), confidences, weights)
        .map_err(|e| FormatError::malformed(path, line_no, e.to_string()))
}

/// Read the 32×160×160 prototype blob, validating its exact byte size.
pub fn read_prototype_blob<S: Real>(path: &Path) -> Result<PrototypeSet<S>, FormatError> {
    let bytes = std::fs::read(path).map_err(|e| FormatError::io(path, e))?;
    if bytes.len() as u64 != PROTO_BLOB_BYTES {
        return Err(FormatError::ProtoBlobSize {
            path: path.display().to_string(),
            expected: PROTO_BLOB_BYTES,
            got: bytes.len() as u64,
        });
    }
    let data: Vec<S> = bytes
        .chunks_exact(4)
        .map(|c| real::<S>(f32::from_le_bytes(c.try_into().unwrap()) as f64))
        .collect();
    Ok(PrototypeSet::standard(data).expect("blob size was validated"))
}

/// Write decoded detections with RLE masks.
pub fn write_decoded_detections<S: Real>(
    path: &Path,
    frame_w: u32,
    frame_h: u32,
    detections: &[Detection2D<S>],
) -> Result<(), FormatError> {
    let mut out = String::new();
    out.push_str("mode: decoded\n");
    out.push_str(&format!("size: {frame_w} {frame_h}\n"));
    for det in detections {
        let runs = det.mask.to_rle();
        out.push_str(&format!(
            "det: {} {:.6} {:.6} {:.6} {:.6} {:.6} {}",
            det.class_id,
            det.confidence.to_f64().unwrap_or(0.0),
            det.pixel_box.min_x.to_f64().unwrap_or(0.0),
            det.pixel_box.min_y.to_f64().unwrap_or(0.0),
            det.pixel_box.max_x.to_f64().unwrap_or(0.0),
            det.pixel_box.max_y.to_f64().unwrap_or(0.0),
            runs.len(),
        ));
        for r in runs {
            out.push_str(&format!(" {r}"));
        }
        out.push('\n');
    }
    let mut file = std::fs::File::create(path).map_err(|e| FormatError::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| FormatError::io(path, e))
}

/// Write raw head records plus the prototype blob next to them.
pub fn write_raw_detections<S: Real>(
    path: &Path,
    protos_file_name: &str,
    detections: &[RawDetection<S>],
    protos: &PrototypeSet<S>,
) -> Result<(), FormatError> {
    let mut out = String::new();
    out.push_str("mode: raw\n");
    out.push_str(&format!("protos: {protos_file_name}\n"));
    for det in detections {
        out.push_str(&format!(
            "det: {:.6} {:.6} {:.6} {:.6}",
            det.cx.to_f64().unwrap_or(0.0),
            det.cy.to_f64().unwrap_or(0.0),
            det.width.to_f64().unwrap_or(0.0),
            det.height.to_f64().unwrap_or(0.0),
        ));
        for v in det.class_confidences.iter().chain(det.mask_weights.iter()) {
            out.push_str(&format!(" {:.6}", v.to_f64().unwrap_or(0.0)));
        }
        out.push('\n');
    }
    let mut file = std::fs::File::create(path).map_err(|e| FormatError::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| FormatError::io(path, e))?;

    let blob_path = path.parent().unwrap_or(Path::new(".")).join(protos_file_name);
    let mut blob = Vec::with_capacity(PROTO_BLOB_BYTES as usize);
    for m in 0..protos.count() {
        for y in 0..protos.grid_height() {
            for x in 0..protos.grid_width() {
                let v = protos.value(m, x, y).to_f64().unwrap_or(0.0) as f32;
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let mut file = std::fs::File::create(&blob_path).map_err(|e| FormatError::io(&blob_path, e))?;
    file.write_all(&blob).map_err(|e| FormatError::io(&blob_path, e))
}

//! Detector head decoding: NMS over raw box records, prototype-mask
//! assembly, resize and erosion into final 2D detections.
//!
//! The raw record layout follows the segmentation head this pipeline
//! consumes: box center/size in pixels, 80 class confidences and 32 mask
//! weights per box, plus 32 shared prototype maps of 160×160 cells.

use thiserror::Error;

use crate::mask::{erode, BinaryMask};
use crate::scalar::{real, Real};

/// Number of class confidences per raw detection.
pub const CLASS_COUNT: usize = 80;
/// Number of mask weights per raw detection (= prototype count).
pub const PROTO_COUNT: usize = 32;
/// Prototype map side length in cells.
pub const PROTO_SIDE: usize = 160;

#[derive(Debug, Error, PartialEq)]
pub enum DecodeError {
    #[error("expected {expected} class confidences, got {got}")]
    ClassArity { expected: usize, got: usize },
    #[error("expected {expected} mask weights, got {got}")]
    WeightArity { expected: usize, got: usize },
    #[error("box size must be positive, got {width}x{height}")]
    BadBoxSize { width: f64, height: f64 },
    #[error("prototype set needs {expected} values for {count} maps of {w}x{h}, got {got}")]
    ProtoSize { expected: usize, got: usize, count: usize, w: usize, h: usize },
    #[error("{got} mask weights against {protos} prototype maps")]
    WeightProtoMismatch { got: usize, protos: usize },
}

/// Axis-aligned 2D box in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box2<S> {
    pub min_x: S,
    pub min_y: S,
    pub max_x: S,
    pub max_y: S,
}

impl<S: Real> Box2<S> {
    pub fn new(min_x: S, min_y: S, max_x: S, max_y: S) -> Self {
        Self { min_x, min_y, max_x, max_y }
    }

    pub fn from_center_size(cx: S, cy: S, w: S, h: S) -> Self {
        let half = real::<S>(0.5);
        Self { min_x: cx - w * half, min_y: cy - h * half, max_x: cx + w * half, max_y: cy + h * half }
    }

    pub fn area(&self) -> S {
        (self.max_x - self.min_x).max(S::zero()) * (self.max_y - self.min_y).max(S::zero())
    }

    /// Clamp to `[0,width]×[0,height]`.
    pub fn clamped(&self, width: u32, height: u32) -> Self {
        let (w, h) = (real::<S>(width as f64), real::<S>(height as f64));
        Self {
            min_x: self.min_x.max(S::zero()).min(w),
            min_y: self.min_y.max(S::zero()).min(h),
            max_x: self.max_x.max(S::zero()).min(w),
            max_y: self.max_y.max(S::zero()).min(h),
        }
    }
}

/// 2D intersection over union; 0 when the union has zero area.
pub fn iou_2d<S: Real>(a: &Box2<S>, b: &Box2<S>) -> S {
    let ix = (a.max_x.min(b.max_x) - a.min_x.max(b.min_x)).max(S::zero());
    let iy = (a.max_y.min(b.max_y) - a.min_y.max(b.min_y)).max(S::zero());
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= S::zero() {
        return S::zero();
    }
    inter / union
}

/// One raw detector head record, before NMS.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDetection<S: Real> {
    pub cx: S,
    pub cy: S,
    pub width: S,
    pub height: S,
    pub class_confidences: Vec<S>,
    pub mask_weights: Vec<S>,
}

impl<S: Real> RawDetection<S> {
    pub fn new(
        cx: S,
        cy: S,
        width: S,
        height: S,
        class_confidences: Vec<S>,
        mask_weights: Vec<S>,
    ) -> Result<Self, DecodeError> {
        if width <= S::zero() || height <= S::zero() {
            return Err(DecodeError::BadBoxSize {
                width: width.to_f64().unwrap_or(f64::NAN),
                height: height.to_f64().unwrap_or(f64::NAN),
            });
        }
        if class_confidences.len() != CLASS_COUNT {
            return Err(DecodeError::ClassArity { expected: CLASS_COUNT, got: class_confidences.len() });
        }
        if mask_weights.len() != PROTO_COUNT {
            return Err(DecodeError::WeightArity { expected: PROTO_COUNT, got: mask_weights.len() });
        }
        Ok(Self { cx, cy, width, height, class_confidences, mask_weights })
    }

    pub fn pixel_box(&self) -> Box2<S> {
        Box2::from_center_size(self.cx, self.cy, self.width, self.height)
    }

    /// Argmax class and its confidence. Ties go to the lower class id.
    pub fn class_and_score(&self) -> (u32, S) {
        let mut best = 0usize;
        for (i, &c) in self.class_confidences.iter().enumerate().skip(1) {
            if c > self.class_confidences[best] {
                best = i;
            }
        }
        (best as u32, self.class_confidences[best])
    }
}

/// Shared set of single-channel prototype maps.
///
/// The production layout is exactly 32 maps of 160×160 cells
/// ([`PrototypeSet::standard`]); arbitrary grids are allowed so the assembly
/// math can be exercised directly.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet<S> {
    count: usize,
    width: usize,
    height: usize,
    data: Vec<S>,
}

impl<S: Real> PrototypeSet<S> {
    pub fn new(count: usize, width: usize, height: usize, data: Vec<S>) -> Result<Self, DecodeError> {
        let expected = count * width * height;
        if data.len() != expected {
            return Err(DecodeError::ProtoSize {
                expected,
                got: data.len(),
                count,
                w: width,
                h: height,
            });
        }
        Ok(Self { count, width, height, data })
    }

    /// The production 32×160×160 layout.
    pub fn standard(data: Vec<S>) -> Result<Self, DecodeError> {
        Self::new(PROTO_COUNT, PROTO_SIDE, PROTO_SIDE, data)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn grid_width(&self) -> usize {
        self.width
    }

    pub fn grid_height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn value(&self, map: usize, x: usize, y: usize) -> S {
        self.data[(map * self.height + y) * self.width + x]
    }
}

/// Final 2D detection: clamped pixel box, class, confidence and a
/// frame-sized binary instance mask.
#[derive(Debug, Clone)]
pub struct Detection2D<S: Real> {
    pub pixel_box: Box2<S>,
    pub class_id: u32,
    pub confidence: S,
    pub mask: BinaryMask,
}

/// Greedy per-class non-maximum suppression on the argmax class confidence.
///
/// Detections scoring below `conf_threshold` are dropped. Survivors are
/// processed in descending score order (ties by lower input index); a
/// detection is suppressed when its 2D IoU with an already-kept detection of
/// the same class exceeds `iou_threshold`. Output keeps that order.
pub fn nms<S: Real>(
    raw: &[RawDetection<S>],
    conf_threshold: S,
    iou_threshold: S,
) -> Vec<RawDetection<S>> {
    let mut scored: Vec<(usize, u32, S)> = raw
        .iter()
        .enumerate()
        .map(|(i, det)| {
            let (class, score) = det.class_and_score();
            (i, class, score)
        })
        .filter(|&(_, _, score)| score >= conf_threshold)
        .collect();
    scored.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));

    let mut kept: Vec<(usize, u32, Box2<S>)> = Vec::new();
    for &(idx, class, _) in &scored {
        let candidate = raw[idx].pixel_box();
        let suppressed = kept
            .iter()
            .any(|(_, kc, kb)| *kc == class && iou_2d(kb, &candidate) > iou_threshold);
        if !suppressed {
            kept.push((idx, class, candidate));
        }
    }
    kept.into_iter().map(|(idx, _, _)| raw[idx].clone()).collect()
}

/// Assemble an instance mask from mask weights and the prototype set.
///
/// The weighted prototype sum is passed through a sigmoid on the prototype
/// grid, bilinearly resized to the frame, binarized with a strict
/// `> bin_threshold` comparison, and zeroed outside the clamped detection
/// box (a pixel is inside when its integer coordinates satisfy
/// `min ≤ p ≤ max`).
pub fn assemble_mask<S: Real>(
    weights: &[S],
    protos: &PrototypeSet<S>,
    pixel_box: &Box2<S>,
    frame_w: u32,
    frame_h: u32,
    bin_threshold: S,
) -> Result<BinaryMask, DecodeError> {
    if weights.len() != protos.count() {
        return Err(DecodeError::WeightProtoMismatch { got: weights.len(), protos: protos.count() });
    }
    let (pw, ph) = (protos.grid_width(), protos.grid_height());

    // Sigmoid of the weighted prototype sum on the prototype grid.
    let mut prob = vec![S::zero(); pw * ph];
    for (m, &w) in weights.iter().enumerate() {
        if w == S::zero() {
            continue;
        }
        for y in 0..ph {
            for x in 0..pw {
                prob[y * pw + x] += w * protos.value(m, x, y);
            }
        }
    }
    for v in &mut prob {
        *v = sigmoid(*v);
    }

    let clamped = pixel_box.clamped(frame_w, frame_h);
    let mut mask = BinaryMask::new(frame_w, frame_h);
    for y in 0..frame_h {
        let fy = real::<S>(y as f64);
        if fy < clamped.min_y || fy > clamped.max_y {
            continue;
        }
        let sy = grid_coord(y, frame_h, ph);
        for x in 0..frame_w {
            let fx = real::<S>(x as f64);
            if fx < clamped.min_x || fx > clamped.max_x {
                continue;
            }
            let sx = grid_coord(x, frame_w, pw);
            if bilinear(&prob, pw, ph, sx, sy) > bin_threshold {
                mask.set(x, y, true);
            }
        }
    }
    Ok(mask)
}

#[inline]
fn sigmoid<S: Real>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

/// Map output pixel `i` of an axis of length `dst` onto the source grid of
/// length `src` using half-pixel centers.
#[inline]
fn grid_coord<S: Real>(i: u32, dst: u32, src: usize) -> S {
    let scale = src as f64 / dst as f64;
    real::<S>((i as f64 + 0.5) * scale - 0.5)
}

fn bilinear<S: Real>(grid: &[S], w: usize, h: usize, x: S, y: S) -> S {
    let xf = x.floor();
    let yf = y.floor();
    let tx = x - xf;
    let ty = y - yf;
    let x0 = clamp_index(xf, w);
    let y0 = clamp_index(yf, h);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let one = S::one();
    let v00 = grid[y0 * w + x0];
    let v10 = grid[y0 * w + x1];
    let v01 = grid[y1 * w + x0];
    let v11 = grid[y1 * w + x1];
    let top = v00 * (one - tx) + v10 * tx;
    let bottom = v01 * (one - tx) + v11 * tx;
    top * (one - ty) + bottom * ty
}

#[inline]
fn clamp_index<S: Real>(v: S, len: usize) -> usize {
    if v <= S::zero() {
        0
    } else {
        (v.to_usize().unwrap_or(0)).min(len - 1)
    }
}

/// Decode one frame of raw head output into final detections: NMS, mask
/// assembly, erosion. Output is in NMS score order.
pub fn decode_frame<S: Real>(
    raw: &[RawDetection<S>],
    protos: &PrototypeSet<S>,
    frame_w: u32,
    frame_h: u32,
    params: &DecodeParams<S>,
) -> Result<Vec<Detection2D<S>>, DecodeError> {
    let kept = nms(raw, params.conf_threshold, params.nms_iou);
    let mut out = Vec::with_capacity(kept.len());
    for det in kept {
        let (class_id, confidence) = det.class_and_score();
        let pixel_box = det.pixel_box().clamped(frame_w, frame_h);
        let mask = assemble_mask(
            &det.mask_weights,
            protos,
            &pixel_box,
            frame_w,
            frame_h,
            params.bin_threshold,
        )?;
        let mask = erode(&mask, params.erosion_radius, params.erosion_iterations);
        out.push(Detection2D { pixel_box, class_id, confidence, mask });
    }
    Ok(out)
}

/// Decode-stage tunables with their documented defaults.
#[derive(Debug, Clone)]
pub struct DecodeParams<S> {
    pub conf_threshold: S,
    pub nms_iou: S,
    pub bin_threshold: S,
    pub erosion_radius: u32,
    pub erosion_iterations: u32,
}

impl<S: Real> Default for DecodeParams<S> {
    fn default() -> Self {
        Self {
            conf_threshold: real(0.25),
            nms_iou: real(0.45),
            bin_threshold: real(0.5),
            erosion_radius: 1,
            erosion_iterations: 1,
        }
    }
}

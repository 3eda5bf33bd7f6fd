use super::{Frame, GeometryError, Vec3};
use crate::scalar::Real;

/// Axis-aligned 3D box, axis-aligned in the axes of its frame tag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb3<S: Real> {
    pub min: Vec3<S>,
    pub max: Vec3<S>,
    pub frame: Frame,
}

/// Denominator convention for the box overlap ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlapMetric {
    /// Intersection over union.
    Iou,
    /// Intersection over the smaller box volume. Scores a partial
    /// re-observation nested inside an established box near 1, where IoU
    /// scores it low.
    MinRatio,
}

impl std::str::FromStr for OverlapMetric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "iou" => Ok(OverlapMetric::Iou),
            "min-ratio" | "min_ratio" => Ok(OverlapMetric::MinRatio),
            other => Err(format!("unknown overlap metric '{other}' (expected iou|min-ratio)")),
        }
    }
}

impl std::fmt::Display for OverlapMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OverlapMetric::Iou => write!(f, "iou"),
            OverlapMetric::MinRatio => write!(f, "min-ratio"),
        }
    }
}

impl<S: Real> Aabb3<S> {
    pub fn new(min: Vec3<S>, max: Vec3<S>, frame: Frame) -> Self {
        debug_assert!(min.x <= max.x && min.y <= max.y && min.z <= max.z);
        Self { min, max, frame }
    }

    pub fn extent(&self) -> Vec3<S> {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3<S> {
        (self.min + self.max).scale(S::from_f64(0.5).unwrap())
    }

    pub fn volume(&self) -> S {
        let e = self.extent();
        e.x * e.y * e.z
    }

    /// Length of the main diagonal.
    pub fn diagonal(&self) -> S {
        self.extent().norm()
    }

    pub fn corners(&self) -> [Vec3<S>; 8] {
        let (lo, hi) = (self.min, self.max);
        [
            Vec3::new(lo.x, lo.y, lo.z),
            Vec3::new(hi.x, lo.y, lo.z),
            Vec3::new(lo.x, hi.y, lo.z),
            Vec3::new(hi.x, hi.y, lo.z),
            Vec3::new(lo.x, lo.y, hi.z),
            Vec3::new(hi.x, lo.y, hi.z),
            Vec3::new(lo.x, hi.y, hi.z),
            Vec3::new(hi.x, hi.y, hi.z),
        ]
    }

    /// Inclusive containment test.
    pub fn contains(&self, p: Vec3<S>) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }

    /// Volume of the intersection with `other`, 0 when disjoint.
    pub fn intersection_volume(&self, other: &Aabb3<S>) -> S {
        let dx = (self.max.x.min(other.max.x) - self.min.x.max(other.min.x)).max(S::zero());
        let dy = (self.max.y.min(other.max.y) - self.min.y.max(other.min.y)).max(S::zero());
        let dz = (self.max.z.min(other.max.z) - self.min.z.max(other.min.z)).max(S::zero());
        dx * dy * dz
    }
}

/// Fit the componentwise min/max box over a non-empty point set.
pub fn fit_aabb<S: Real>(points: &[Vec3<S>], frame: Frame) -> Result<Aabb3<S>, GeometryError> {
    let first = points.first().ok_or(GeometryError::EmptyCluster)?;
    let mut min = *first;
    let mut max = *first;
    for p in &points[1..] {
        min = min.min_with(*p);
        max = max.max_with(*p);
    }
    Ok(Aabb3 { min, max, frame })
}

/// Overlap ratio between two boxes in the same frame.
///
/// `iou` divides the intersection volume by the union volume, `min_ratio` by
/// the smaller box volume. Degenerate zero-volume operands yield 0.
pub fn overlap_ratio<S: Real>(
    a: &Aabb3<S>,
    b: &Aabb3<S>,
    metric: OverlapMetric,
) -> Result<S, GeometryError> {
    if a.frame != b.frame {
        return Err(GeometryError::FrameMismatch { expected: a.frame, found: b.frame });
    }
    let inter = a.intersection_volume(b);
    if inter <= S::zero() {
        return Ok(S::zero());
    }
    let (va, vb) = (a.volume(), b.volume());
    let denom = match metric {
        OverlapMetric::Iou => va + vb - inter,
        OverlapMetric::MinRatio => va.min(vb),
    };
    if denom <= S::zero() {
        return Ok(S::zero());
    }
    Ok(inter / denom)
}

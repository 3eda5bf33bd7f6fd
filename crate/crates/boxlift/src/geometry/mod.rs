//! Coordinate frames, rigid transforms, pinhole projection and axis-aligned
//! 3D box primitives shared by every pipeline layer.
//!
//! Conventions: the LiDAR frame `L` moves with the sensor, the world frame
//! `W` is fixed, and the camera frame `C` only ever holds pixels. Points are
//! column vectors in meters; pixel coordinates are real-valued, rounding is
//! the caller's choice.

mod aabb;
mod camera;
mod transform;
mod vec3;

pub use aabb::{fit_aabb, overlap_ratio, Aabb3, OverlapMetric};
pub use camera::{project_point, CameraModel, Pixel};
pub use transform::{transform_point, Mat3, RigidTransform};
pub use vec3::Vec3;

use thiserror::Error;

use crate::scalar::Real;

/// Reference frame a point set is expressed in.
///
/// Clouds and boxes are tagged at runtime so cross-frame mix-ups surface as
/// errors instead of silently wrong geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Frame {
    /// Per-scan LiDAR sensor frame.
    Lidar,
    /// Fixed world frame.
    World,
}

impl std::fmt::Display for Frame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Frame::Lidar => write!(f, "L"),
            Frame::World => write!(f, "W"),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("empty cluster")]
    EmptyCluster,
    #[error("frame mismatch: expected {expected}, found {found}")]
    FrameMismatch { expected: Frame, found: Frame },
    #[error("rotation is not orthonormal (max deviation {deviation:.3e})")]
    NonOrthonormal { deviation: f64 },
    #[error("improper rotation (determinant {det:.6})")]
    ImproperRotation { det: f64 },
}

/// Ordered list of 3D points tagged with the frame they live in.
///
/// Point order is stable under transformation: index `i` of the output always
/// corresponds to index `i` of the input.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud<S: Real> {
    pub points: Vec<Vec3<S>>,
    pub frame: Frame,
}

impl<S: Real> PointCloud<S> {
    pub fn new(points: Vec<Vec3<S>>, frame: Frame) -> Self {
        Self { points, frame }
    }

    pub fn empty(frame: Frame) -> Self {
        Self { points: Vec::new(), frame }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Apply a rigid transform to every point, retagging the cloud with the
    /// frame the transform maps into. Order is preserved.
    pub fn transformed(&self, t: &RigidTransform<S>, frame: Frame) -> PointCloud<S> {
        PointCloud {
            points: self.points.iter().map(|p| t.apply(*p)).collect(),
            frame,
        }
    }
}

/// Transform a cloud point-by-point. See [`PointCloud::transformed`].
pub fn transform_cloud<S: Real>(
    cloud: &PointCloud<S>,
    t: &RigidTransform<S>,
    frame: Frame,
) -> PointCloud<S> {
    cloud.transformed(t, frame)
}

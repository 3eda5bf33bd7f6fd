//! Camera-LiDAR fusion for lightweight 3D object localization.
//!
//! The pipeline lifts 2D instance detections into 3D in three layers:
//!
//! 1. **Box generation** ([`layer1`]): project each LiDAR scan into the
//!    image, label points through the instance masks, Euclidean-cluster each
//!    instance, keep the largest cluster and fit a 3D box per object in the
//!    sensor frame.
//! 2. **Pairing and merging** ([`layer2`]): transform per-scan clusters and
//!    boxes into the world frame with the odometry pose, pair them with the
//!    object registry by box overlap, and merge paired observations by
//!    refitting a box over the union of their cluster points.
//! 3. **Global refinement** ([`layer3`]): accumulate scans into a voxel-indexed
//!    world map and grow each object cluster with map points that fall inside
//!    point-centered voxel regions, then localize objects by cluster centroid.
//!
//! [`detect`] decodes raw detector head outputs (NMS, prototype-mask
//! assembly, erosion), [`io`] holds all file formats, [`eval`] the mIoU
//! harness, [`synth`] a deterministic fixture generator, and [`pipeline`]
//! the sequence orchestrator behind the `boxlift` CLI.
//!
//! All geometry is generic over the scalar type ([`scalar::Real`], `f32` or
//! `f64`); the aliases below fix the double-precision variants the CLI uses.

pub mod detect;
pub mod eval;
pub mod fxhash;
pub mod geometry;
pub mod io;
pub mod layer1;
pub mod layer2;
pub mod layer3;
pub mod mask;
pub mod pipeline;
pub mod scalar;
pub mod synth;

pub use scalar::Real;

/// Double-precision aliases (the CLI and most tests run on these).
pub type Vec3d = geometry::Vec3<f64>;
pub type Mat3d = geometry::Mat3<f64>;
pub type RigidTransformD = geometry::RigidTransform<f64>;
pub type PointCloudD = geometry::PointCloud<f64>;
pub type Aabb3d = geometry::Aabb3<f64>;
pub type CameraModelD = geometry::CameraModel<f64>;

/// Single-precision aliases.
pub type Vec3f = geometry::Vec3<f32>;
pub type Aabb3f = geometry::Aabb3<f32>;

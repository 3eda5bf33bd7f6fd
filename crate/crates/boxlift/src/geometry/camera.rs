use super::{RigidTransform, Vec3};
use crate::scalar::{real, Real};

/// Real-valued pixel coordinates; integer rounding is the caller's choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pixel<S> {
    pub u: S,
    pub v: S,
}

/// Pinhole camera: intrinsics `K` plus the LiDAR→camera extrinsics `[R|t]`.
///
/// Projection of a LiDAR-frame point is `K·[R|t]·[p;1]` dehomogenized by the
/// camera-frame depth. No distortion model.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel<S: Real> {
    pub fx: S,
    pub fy: S,
    pub cx: S,
    pub cy: S,
    pub width: u32,
    pub height: u32,
    pub extrinsics: RigidTransform<S>,
}

impl<S: Real> CameraModel<S> {
    /// Points closer to the image plane than this depth are rejected.
    pub fn min_depth() -> S {
        real(1e-6)
    }

    pub fn new(
        fx: S,
        fy: S,
        cx: S,
        cy: S,
        width: u32,
        height: u32,
        extrinsics: RigidTransform<S>,
    ) -> Self {
        assert!(fx > S::zero() && fy > S::zero(), "focal lengths must be positive");
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self { fx, fy, cx, cy, width, height, extrinsics }
    }

    /// Project a LiDAR-frame point into the image plane.
    ///
    /// Returns `None` for points at or behind the image plane (camera-frame
    /// depth ≤ 1e-6 m). Does NOT clip to image bounds; callers clip.
    pub fn project(&self, p: Vec3<S>) -> Option<Pixel<S>> {
        let cam = self.extrinsics.apply(p);
        if cam.z <= Self::min_depth() {
            return None;
        }
        let inv_z = S::one() / cam.z;
        Some(Pixel {
            u: self.fx * cam.x * inv_z + self.cx,
            v: self.fy * cam.y * inv_z + self.cy,
        })
    }

    /// True when the real-valued pixel lies inside `[0,width)×[0,height)`.
    pub fn contains_pixel(&self, px: &Pixel<S>) -> bool {
        px.u >= S::zero()
            && px.u < real(self.width as f64)
            && px.v >= S::zero()
            && px.v < real(self.height as f64)
    }
}

/// Free-function form of [`CameraModel::project`].
pub fn project_point<S: Real>(p: Vec3<S>, cam: &CameraModel<S>) -> Option<Pixel<S>> {
    cam.project(p)
}

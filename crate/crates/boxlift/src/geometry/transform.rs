use super::{GeometryError, Vec3};
use crate::scalar::{real, Real};

/// Row-major 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3<S> {
    pub m: [[S; 3]; 3],
}

impl<S: Real> Mat3<S> {
    pub fn new(m: [[S; 3]; 3]) -> Self {
        Self { m }
    }

    pub fn identity() -> Self {
        let o = S::one();
        let z = S::zero();
        Self { m: [[o, z, z], [z, o, z], [z, z, o]] }
    }

    pub fn row(&self, i: usize) -> Vec3<S> {
        Vec3::new(self.m[i][0], self.m[i][1], self.m[i][2])
    }

    pub fn col(&self, j: usize) -> Vec3<S> {
        Vec3::new(self.m[0][j], self.m[1][j], self.m[2][j])
    }

    pub fn transpose(&self) -> Self {
        let m = &self.m;
        Self {
            m: [
                [m[0][0], m[1][0], m[2][0]],
                [m[0][1], m[1][1], m[2][1]],
                [m[0][2], m[1][2], m[2][2]],
            ],
        }
    }

    pub fn det(&self) -> S {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn mul_vec(&self, v: Vec3<S>) -> Vec3<S> {
        Vec3::new(self.row(0).dot(v), self.row(1).dot(v), self.row(2).dot(v))
    }

    pub fn mul_mat(&self, rhs: &Self) -> Self {
        let mut out = [[S::zero(); 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = self.row(i).dot(rhs.col(j));
            }
        }
        Self { m: out }
    }

    fn from_rows(r0: Vec3<S>, r1: Vec3<S>, r2: Vec3<S>) -> Self {
        Self { m: [[r0.x, r0.y, r0.z], [r1.x, r1.y, r1.z], [r2.x, r2.y, r2.z]] }
    }

    /// Largest absolute entry of `R·Rᵀ − I`.
    pub fn orthonormality_deviation(&self) -> S {
        let rrt = self.mul_mat(&self.transpose());
        let mut dev = S::zero();
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { S::one() } else { S::zero() };
                dev = dev.max((rrt.m[i][j] - target).abs());
            }
        }
        dev
    }

    /// Rotation about +z by `angle` radians.
    pub fn rotation_z(angle: S) -> Self {
        let (s, c) = (angle.sin(), angle.cos());
        let z = S::zero();
        let o = S::one();
        Self { m: [[c, -s, z], [s, c, z], [z, z, o]] }
    }

    /// Rodrigues rotation about a unit axis.
    pub fn from_axis_angle(axis: Vec3<S>, angle: S) -> Self {
        let a = axis.normalized();
        let (s, c) = (angle.sin(), angle.cos());
        let t = S::one() - c;
        Self {
            m: [
                [t * a.x * a.x + c, t * a.x * a.y - s * a.z, t * a.x * a.z + s * a.y],
                [t * a.x * a.y + s * a.z, t * a.y * a.y + c, t * a.y * a.z - s * a.x],
                [t * a.x * a.z - s * a.y, t * a.y * a.z + s * a.x, t * a.z * a.z + c],
            ],
        }
    }

    /// Re-orthonormalize via Gram-Schmidt on the rows. Valid for matrices
    /// already close to a rotation; the determinant sign is preserved by
    /// construction only for proper rotations.
    pub fn orthonormalized(&self) -> Self {
        let r0 = self.row(0).normalized();
        let r1 = self.row(1) - r0.scale(self.row(1).dot(r0));
        let r1 = r1.normalized();
        let r2 = r0.cross(r1);
        Self::from_rows(r0, r1, r2)
    }
}

/// Rigid body transform: rotation then translation.
///
/// The rotation is orthonormal with determinant +1 within 1e-6; composition
/// and inversion stay within that tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform<S: Real> {
    pub rotation: Mat3<S>,
    pub translation: Vec3<S>,
}

impl<S: Real> RigidTransform<S> {
    /// Tolerance on `R·Rᵀ − I` accepted by [`RigidTransform::new`].
    pub fn rotation_tolerance() -> S {
        real(1e-6)
    }

    /// Build a transform, validating that `rotation` is a proper rotation.
    pub fn new(rotation: Mat3<S>, translation: Vec3<S>) -> Result<Self, GeometryError> {
        let det = rotation.det();
        if det < S::zero() {
            return Err(GeometryError::ImproperRotation { det: det.to_f64().unwrap_or(f64::NAN) });
        }
        let dev = rotation.orthonormality_deviation();
        if dev > Self::rotation_tolerance() {
            return Err(GeometryError::NonOrthonormal {
                deviation: dev.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(Self { rotation, translation })
    }

    /// Build from parts known to satisfy the rotation invariant.
    pub fn from_parts(rotation: Mat3<S>, translation: Vec3<S>) -> Self {
        debug_assert!(rotation.orthonormality_deviation() <= real(1e-5));
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self { rotation: Mat3::identity(), translation: Vec3::zero() }
    }

    pub fn from_translation(t: Vec3<S>) -> Self {
        Self { rotation: Mat3::identity(), translation: t }
    }

    /// `R·p + t`
    pub fn apply(&self, p: Vec3<S>) -> Vec3<S> {
        self.rotation.mul_vec(p) + self.translation
    }

    /// `self ∘ rhs`: applies `rhs` first.
    pub fn compose(&self, rhs: &Self) -> Self {
        Self {
            rotation: self.rotation.mul_mat(&rhs.rotation),
            translation: self.rotation.mul_vec(rhs.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self { rotation: rt, translation: -rt.mul_vec(self.translation) }
    }
}

/// `R·p + t` as a free function.
pub fn transform_point<S: Real>(p: Vec3<S>, t: &RigidTransform<S>) -> Vec3<S> {
    t.apply(p)
}

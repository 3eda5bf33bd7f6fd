use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use crate::scalar::Real;

/// 3D vector / point in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3<S> {
    pub x: S,
    pub y: S,
    pub z: S,
}

impl<S: Real> Vec3<S> {
    pub fn new(x: S, y: S, z: S) -> Self {
        Self { x, y, z }
    }

    pub fn zero() -> Self {
        Self { x: S::zero(), y: S::zero(), z: S::zero() }
    }

    pub fn dot(self, rhs: Self) -> S {
        self.x * rhs.x + self.y * rhs.y + self.z * rhs.z
    }

    pub fn cross(self, rhs: Self) -> Self {
        Self {
            x: self.y * rhs.z - self.z * rhs.y,
            y: self.z * rhs.x - self.x * rhs.z,
            z: self.x * rhs.y - self.y * rhs.x,
        }
    }

    pub fn norm_squared(self) -> S {
        self.dot(self)
    }

    pub fn norm(self) -> S {
        self.norm_squared().sqrt()
    }

    /// Chebyshev (max-norm) length, used by the voxel-region membership test.
    pub fn norm_inf(self) -> S {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }

    pub fn normalized(self) -> Self {
        self / self.norm()
    }

    pub fn scale(self, s: S) -> Self {
        Self { x: self.x * s, y: self.y * s, z: self.z * s }
    }

    /// Componentwise minimum.
    pub fn min_with(self, rhs: Self) -> Self {
        Self { x: self.x.min(rhs.x), y: self.y.min(rhs.y), z: self.z.min(rhs.z) }
    }

    /// Componentwise maximum.
    pub fn max_with(self, rhs: Self) -> Self {
        Self { x: self.x.max(rhs.x), y: self.y.max(rhs.y), z: self.z.max(rhs.z) }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Bit pattern of the coordinates widened to f64; two points compare
    /// equal here iff they are the same point coordinate-for-coordinate.
    pub fn bit_key(self) -> [u64; 3] {
        [
            self.x.to_f64().unwrap_or(f64::NAN).to_bits(),
            self.y.to_f64().unwrap_or(f64::NAN).to_bits(),
            self.z.to_f64().unwrap_or(f64::NAN).to_bits(),
        ]
    }
}

impl<S: Real> Add for Vec3<S> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self { x: self.x + rhs.x, y: self.y + rhs.y, z: self.z + rhs.z }
    }
}

impl<S: Real> AddAssign for Vec3<S> {
    fn add_assign(&mut self, rhs: Self) {
        self.x += rhs.x;
        self.y += rhs.y;
        self.z += rhs.z;
    }
}

impl<S: Real> Sub for Vec3<S> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self { x: self.x - rhs.x, y: self.y - rhs.y, z: self.z - rhs.z }
    }
}

impl<S: Real> Neg for Vec3<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Self { x: -self.x, y: -self.y, z: -self.z }
    }
}

impl<S: Real> Mul<S> for Vec3<S> {
    type Output = Self;
    fn mul(self, rhs: S) -> Self {
        self.scale(rhs)
    }
}

impl<S: Real> Div<S> for Vec3<S> {
    type Output = Self;
    fn div(self, rhs: S) -> Self {
        Self { x: self.x / rhs, y: self.y / rhs, z: self.z / rhs }
    }
}

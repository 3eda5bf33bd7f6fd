//! Scalar abstraction: the whole geometry core is generic over the
//! floating-point type, instantiated as `f32` or `f64`.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar used throughout the pipeline.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Debug + Display + Default + Send + Sync + 'static
{
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + Debug
        + Display
        + Default
        + Send
        + Sync
        + 'static
{
}

/// Convert an `f64` literal into the working scalar type.
///
/// Panics only if the target type cannot represent any finite value of the
/// source, which does not happen for f32/f64.
#[inline]
pub fn real<S: Real>(v: f64) -> S {
    S::from_f64(v).expect("finite f64 converts to scalar")
}

/// Convert a count into the working scalar type.
#[inline]
pub fn real_of_usize<S: Real>(n: usize) -> S {
    S::from_usize(n).expect("usize converts to scalar")
}

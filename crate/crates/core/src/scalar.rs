//! Scalar types accepted for vector coordinates.

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Coordinate type of a vector: `f32` or `f64`.
///
/// Everything downstream of the coordinates (hash values, distances) is
/// carried in `f64`, so the scalar only has to widen losslessly.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Default + Send + Sync + 'static
{
    fn widen(self) -> f64;

    /// Narrowing conversion used by the fvecs writer.
    fn to_f32_lossy(self) -> f32;

    fn widen_f32(v: f32) -> Self;
}

impl Scalar for f32 {
    #[inline]
    fn widen(self) -> f64 {
        self as f64
    }

    #[inline]
    fn to_f32_lossy(self) -> f32 {
        self
    }

    #[inline]
    fn widen_f32(v: f32) -> Self {
        v
    }
}

impl Scalar for f64 {
    #[inline]
    fn widen(self) -> f64 {
        self
    }

    #[inline]
    fn to_f32_lossy(self) -> f32 {
        self as f32
    }

    #[inline]
    fn widen_f32(v: f32) -> Self {
        v as f64
    }
}

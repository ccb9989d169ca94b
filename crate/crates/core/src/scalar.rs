//! Scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point type the barrier, QP and simulation code is generic over.
///
/// Implemented for `f32` and `f64`. Tolerances inside the crate are derived
/// from [`Float::epsilon`] so the same code paths are usable at both widths.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal; every finite literal used in the crate is representable.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal must be representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `factor * epsilon`, the building block of scale-relative tolerances.
    #[inline]
    fn eps_times(factor: f64) -> Self {
        Self::epsilon() * Self::lit(factor)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts a slice of `f64` into the target scalar type.
pub fn vec_from_f64<S: Scalar>(v: &[f64]) -> Vec<S> {
    v.iter().map(|&x| S::lit(x)).collect()
}

pub fn vec_to_f64<S: Scalar>(v: &[S]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

//! Scalar abstraction over the floating-point element type.
//!
//! All numeric kernels in this crate are generic over [`Scalar`] so the same
//! code runs in single precision for speed and in double precision for the
//! oracle tests. Concrete aliases live at the crate root.

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + NumAssign
    + ScalarOperand
    + LinalgScalar
    + Sum
    + Display
    + Debug
    + Send
    + Sync
    + 'static
{
    /// Error function, needed for the exact Gaussian CDF form of GELU and
    /// for Gaussian frequency pulses.
    fn erf(self) -> Self;
}

impl Scalar for f32 {
    fn erf(self) -> f32 {
        libm::erff(self)
    }
}

impl Scalar for f64 {
    fn erf(self) -> f64 {
        libm::erf(self)
    }
}

/// Shorthand for converting an `f64` literal into the working scalar type.
#[inline]
pub fn lit<S: Scalar>(x: f64) -> S {
    S::from_f64(x).expect("literal not representable in scalar type")
}

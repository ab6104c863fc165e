//! Floating-point scalar abstraction.
//!
//! All numeric code in this crate is generic over [`Scalar`], which is
//! implemented for `f32` and `f64`. The shipped pipeline instantiates
//! everything with [`crate::Real`] (`f32`); oracle tests typically use `f64`.

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign, NumCast, ToPrimitive};
use rand::distr::uniform::SampleUniform;
use std::fmt::{Debug, Display};
use std::iter::Sum;

pub trait Scalar:
    Float
    + NumAssign
    + NumCast
    + FromPrimitive
    + ToPrimitive
    + ScalarOperand
    + LinalgScalar
    + SampleUniform
    + Sum
    + PartialOrd
    + Copy
    + Send
    + Sync
    + Debug
    + Display
    + 'static
{
    /// Lossy cast from `f64`; panics only for non-representable NaN-free overflow,
    /// which cannot occur for the constants used in this crate.
    fn from_f(v: f64) -> Self {
        NumCast::from(v).expect("f64 constant representable in scalar type")
    }

    fn to_f(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }

    fn from_usize_(v: usize) -> Self {
        NumCast::from(v).expect("usize representable in scalar type")
    }
}

impl<T> Scalar for T where
    T: Float
        + NumAssign
        + NumCast
        + FromPrimitive
        + ToPrimitive
        + ScalarOperand
        + LinalgScalar
        + SampleUniform
        + Sum
        + PartialOrd
        + Copy
        + Send
        + Sync
        + Debug
        + Display
        + 'static
{
}

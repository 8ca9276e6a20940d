//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point type usable for features, model parameters and scores.
///
/// Implemented for `f32` and `f64`. Metric values (ratios of counts) are always
/// reported as `f64` regardless of the scalar chosen here.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` constant into this scalar type.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Dot product of two equal-length slices.
#[inline]
pub(crate) fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub(crate) fn squared_distance<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| {
        let d = x - y;
        acc + d * d
    })
}

/// Numerically stable `ln Σ exp(z_i)`.
pub(crate) fn log_sum_exp<F: Scalar>(z: &[F]) -> F {
    let max = z.iter().copied().fold(F::neg_infinity(), F::max);
    if !max.is_finite() {
        return max;
    }
    let sum: F = z.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

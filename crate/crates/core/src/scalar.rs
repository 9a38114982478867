//! Scalar abstraction for the numeric kernels.
//!
//! Core math is written against [`Scalar`] so the same code runs at `f32` or
//! `f64`; the pipeline instantiates everything at [`crate::Real`].

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar usable in every numeric kernel of this crate.
pub trait Scalar:
    Float
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + LinalgScalar
    + ScalarOperand
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`, used for constants and RNG draws.
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("f64 converts to any Scalar")
    }

    /// Lossy conversion to `f64`, used for reporting and file output.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("any Scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Shorthand for `T::from_f64_lossy` in constant-heavy formulas.
#[inline]
pub fn c<T: Scalar>(x: f64) -> T {
    T::from_f64_lossy(x)
}

/// Numerically stable `log(1 + exp(-x))`, i.e. `-log(sigmoid(x))`.
#[inline]
pub fn softplus_neg<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        (T::one() + (-x).exp()).ln()
    } else {
        -x + (T::one() + x.exp()).ln()
    }
}

/// Logistic sigmoid.
#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_matches_definition() {
        for &x in &[-30.0, -2.0, 0.0, 1.5, 30.0f64] {
            let direct = 1.0 / (1.0 + (-x).exp());
            assert!((sigmoid(x) - direct).abs() < 1e-15);
        }
    }

    #[test]
    fn softplus_neg_is_stable_for_large_inputs() {
        // -log(sigmoid(800)) would overflow the naive formula.
        let v: f64 = softplus_neg(800.0);
        assert!(v >= 0.0 && v < 1e-300);
        let w: f64 = softplus_neg(-800.0);
        assert!((w - 800.0).abs() < 1e-9);
    }

    #[test]
    fn generic_at_f32() {
        let s: f32 = sigmoid(0.0);
        assert!((s - 0.5).abs() < 1e-7);
    }
}

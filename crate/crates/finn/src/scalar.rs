//! Floating-point scalar abstraction.
//!
//! All numeric code in this crate is generic over [`Real`], which is
//! `f32` or `f64` plus the error function. Concrete aliases for the
//! main types live at the crate root.

use num_traits::{Float, FloatConst, FromPrimitive};
use std::fmt::{Debug, Display};

/// Scalar type the whole crate is generic over.
///
/// Extends [`num_traits::Float`] with the error function, which the
/// activation family is built on. Every `Real` is also the plain
/// (derivative-free) case of [`crate::multidual::AdScalar`], so the
/// same forward-pass code serves evaluation and tape recording.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + Debug
    + Display
    + Send
    + Sync
    + 'static
    + crate::multidual::AdScalar<Real = Self, Ctx = ()>
{
    fn erf(self) -> Self;
    /// Complementary error function; keeps full precision in the left
    /// tail where `erf` saturates to -1.
    fn erfc(self) -> Self;

    /// Shorthand for lossy conversion from `f64` literals.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 conversion")
    }
}

impl Real for f64 {
    fn erf(self) -> Self {
        libm::erf(self)
    }
    fn erfc(self) -> Self {
        libm::erfc(self)
    }
}

impl Real for f32 {
    fn erf(self) -> Self {
        // evaluate in f64: erff loses ~2 ulp versus this round-trip
        libm::erf(self as f64) as f32
    }
    fn erfc(self) -> Self {
        libm::erfc(self as f64) as f32
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erf_reference_values() {
        // high-precision values from mpmath
        assert!((1.0_f64.erf() - 0.8427007929497148693).abs() < 1e-15);
        assert!((0.5_f64.erf() - 0.5204998778130465377).abs() < 1e-15);
        assert!(((-2.0_f64).erf() + 0.9953222650189527342).abs() < 1e-15);
        assert_eq!(0.0_f64.erf(), 0.0);
        assert_eq!(40.0_f64.erf(), 1.0);
    }

    #[test]
    fn erf_is_odd() {
        for i in 0..100 {
            let x = -5.0 + 0.1 * i as f64;
            assert_eq!(x.erf(), -(-x).erf());
        }
    }

    #[test]
    fn erf_f32_matches_f64() {
        for i in 0..50 {
            let x = -3.0 + 0.13 * i as f32;
            assert!((x.erf() as f64 - (x as f64).erf()).abs() < 1e-6);
        }
    }
}

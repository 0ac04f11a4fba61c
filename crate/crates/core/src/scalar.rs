//! Floating-point scalar abstraction shared by every numeric routine.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal. Panics only for values the type cannot hold
    /// at all, which never happens for `f32`/`f64`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    /// Tolerance for "sums to one" checks on probability rows: `1e-12`, or a
    /// few dozen ulps when the type is coarser than that.
    #[inline]
    fn row_tolerance() -> Self {
        let floor = Self::lit(1e-12);
        let ulps = Self::epsilon() * Self::lit(64.0);
        if ulps > floor {
            ulps
        } else {
            floor
        }
    }

    /// `ln(1 + e^x)` without overflow.
    #[inline]
    fn softplus(self) -> Self {
        if self > Self::zero() {
            self + (-self).exp().ln_1p()
        } else {
            self.exp().ln_1p()
        }
    }

    /// Logistic sigmoid, evaluated on the stable branch for either sign.
    #[inline]
    fn sigmoid(self) -> Self {
        if self >= Self::zero() {
            Self::one() / (Self::one() + (-self).exp())
        } else {
            let e = self.exp();
            e / (Self::one() + e)
        }
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_matches_log_sigmoid_identity() {
        for &x in &[-40.0f64, -3.0, -0.5, 0.0, 0.5, 3.0, 40.0] {
            // -log sigmoid(x) = softplus(-x)
            let direct = -(x.sigmoid().ln());
            assert!((direct - (-x).softplus()).abs() < 1e-12, "x={x}");
        }
        assert_eq!(0.0f64.softplus(), std::f64::consts::LN_2);
        assert!((1000.0f64).softplus().is_finite());
    }

    #[test]
    fn row_tolerance_per_type() {
        assert_eq!(f64::row_tolerance(), 1e-12);
        assert!(f32::row_tolerance() > 1e-7);
    }
}

//! Numeric abstraction shared by the closed-form analytics.
//!
//! Everything in [`crate::analytics`] and [`crate::slotted`] is written once
//! against [`Scalar`] and instantiated with `f64` for everyday use, `f32` when
//! memory matters, and [`Exact`] (arbitrary-precision rationals) when a result
//! has to be checked symbol for symbol.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

/// Exact rational scalar.
pub type Exact = BigRational;

/// A field-like number type the analytics can be computed in.
pub trait Scalar:
    Num + Signed + PartialOrd + Clone + Debug + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// Distance from a threshold inside which a load is reported as sitting
    /// exactly on it.
    fn boundary_tolerance() -> Self;

    /// Lossy conversion used for reporting and for driving the simulators.
    fn as_f64(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Conversion from a decimal literal. Rationals get the exact binary value
    /// of the `f64`.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    fn from_usize_exact(n: usize) -> Self {
        Self::from_usize(n).expect("integer fits scalar")
    }

    fn min_of(a: Self, b: Self) -> Self {
        if b < a {
            b
        } else {
            a
        }
    }

    fn max_of(a: Self, b: Self) -> Self {
        if b > a {
            b
        } else {
            a
        }
    }
}

impl Scalar for f64 {
    fn boundary_tolerance() -> Self {
        1e-12
    }
}

// 1e-12 is below f32 resolution near 1.
impl Scalar for f32 {
    fn boundary_tolerance() -> Self {
        1e-6
    }
}

impl Scalar for BigRational {
    fn boundary_tolerance() -> Self {
        BigRational::from_integer(BigInt::from(0))
    }

    fn lit(x: f64) -> Self {
        BigRational::from_float(x).expect("finite literal")
    }
}

/// Builds an exact rational `num / den`.
pub fn ratio(num: i64, den: i64) -> Exact {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

//! A small numeric abstraction so every formula runs in both double precision
//! and exact rational arithmetic.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Field operations shared by `f64` and `BigRational`.
///
/// `tol()` is the magnitude below which a value counts as zero in comparisons
/// (exactly zero for rationals). `from_f64_exact` embeds an `f64` without
/// rounding: every finite double is a dyadic rational.
pub trait Scalar:
    Clone
    + PartialOrd
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + std::fmt::Debug
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_f64_exact(x: f64) -> Self;
    fn from_int(n: i64) -> Self;
    fn to_f64(&self) -> f64;
    fn tol() -> Self;

    fn is_zero_within_tol(&self) -> bool {
        let mag = if *self < Self::zero() { -self.clone() } else { self.clone() };
        mag <= Self::tol()
    }
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64_exact(x: f64) -> Self {
        x
    }
    fn from_int(n: i64) -> Self {
        n as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn tol() -> Self {
        1e-11
    }
}

impl Scalar for BigRational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn from_f64_exact(x: f64) -> Self {
        BigRational::from_float(x).expect("finite float")
    }
    fn from_int(n: i64) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }
    fn to_f64(&self) -> f64 {
        num_traits::ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn tol() -> Self {
        Zero::zero()
    }
}

/// Exact rational from a decimal literal given as numerator/denominator,
/// e.g. `ratio(25, 100)` for 0.25. Convenience for tests and grids.
pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Absolute value helper usable with any scalar.
pub fn abs<S: Scalar>(x: S) -> S {
    if x < S::zero() {
        -x
    } else {
        x
    }
}

/// Exact check that a rational is nonnegative (used by LP feasibility tests).
pub fn is_nonnegative(x: &BigRational) -> bool {
    !x.is_negative()
}

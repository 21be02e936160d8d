//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};
use std::str::FromStr;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type the probes, calibration and control law are written against.
///
/// Implemented for `f32` and `f64`. `Display`/`FromStr` must round-trip, which is what
/// the axiom printer relies on.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + FromStr
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Never fails for the implemented types.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Midpoint of the two central order statistics for even lengths.
/// `values` is sorted in place; returns `None` when empty or when a NaN is present.
pub fn median_in_place<T: Scalar>(values: &mut [T]) -> Option<T> {
    if values.is_empty() || values.iter().any(|v| v.is_nan()) {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    let n = values.len();
    if n % 2 == 1 {
        Some(values[n / 2])
    } else {
        let lo = values[n / 2 - 1];
        let hi = values[n / 2];
        Some(lo + (hi - lo) / T::lit(2.0))
    }
}

pub fn median<T: Scalar>(values: &[T]) -> Option<T> {
    let mut v = values.to_vec();
    median_in_place(&mut v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_odd_and_even() {
        assert_eq!(median(&[3.0_f64, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[0.2_f64, 0.4]), Some(0.30000000000000004));
        assert_eq!(median::<f64>(&[]), None);
        assert_eq!(median(&[1.0_f32, f32::NAN]), None);
    }

    #[test]
    fn literal_conversion() {
        assert_eq!(f32::lit(0.5), 0.5_f32);
        assert_eq!(f64::from_count(7), 7.0);
    }
}

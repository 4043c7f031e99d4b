//! Floating point abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// A real scalar the simulation and estimation code can run on: `f32` or `f64`.
///
/// Random draws are always made in `f64` and then narrowed, so a given seed
/// produces the same underlying stream for every scalar type.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + FromStr
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every float type")
    }

    /// Widening conversion to `f64`.
    fn f64(self) -> f64 {
        self.to_f64().expect("float converts to f64")
    }

    /// Count to scalar.
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("count is representable")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Formats a value with 17 significant digits, enough for an exact `f64` round trip.
pub fn format_exact<T: Scalar>(x: T) -> String {
    let x = x.f64();
    if x.is_nan() {
        return "NaN".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{:.16e}", x)
}

/// Parses a value written by [`format_exact`] (or any plain decimal).
pub fn parse_exact<T: Scalar>(s: &str) -> Option<T> {
    match s.trim() {
        "NaN" => Some(T::nan()),
        "inf" => Some(T::infinity()),
        "-inf" => Some(T::neg_infinity()),
        other => other.parse::<f64>().ok().map(T::of),
    }
}

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar used throughout the crate.
///
/// Everything numeric is written against this trait so the same code runs
/// in `f32` or `f64`. The interior-point solver needs `f64` to reach its
/// default tolerances, but the model and capacity primitives are exact
/// enough in either.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

/// Converts a count into `T`.
#[inline]
pub fn count<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("count representable in scalar type")
}

/// `log2(1 + x)`, accurate for small `x`.
#[inline]
pub fn log2_1p<T: Real>(x: T) -> T {
    x.ln_1p() / T::LN_2()
}

/// Lossy view as `f64`, for reporting.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Trapezoidal quadrature weights on a knot grid.
pub fn trapezoid_weights<T: Real>(knot_times: &[T]) -> Vec<T> {
    let n = knot_times.len();
    let mut w = vec![T::zero(); n];
    let half = lit::<T>(0.5);
    for k in 1..n {
        let h = knot_times[k] - knot_times[k - 1];
        w[k - 1] += half * h;
        w[k] += half * h;
    }
    w
}

/// Uniform grid of `intervals + 1` knots on `[0, horizon]`.
pub fn uniform_knots<T: Real>(horizon: T, intervals: usize) -> Vec<T> {
    let h = horizon / count::<T>(intervals);
    (0..=intervals).map(|k| h * count::<T>(k)).collect()
}

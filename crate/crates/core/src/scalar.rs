//! Floating-point scalar abstraction shared by the cost, flood and
//! exposure models.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar the numeric models are generic over: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + FromStr
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`, used for configuration constants.
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("f64 is representable in every Scalar")
    }

    fn of_usize(value: usize) -> Self {
        Self::from_usize(value).expect("usize is representable in every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Exactly rounded sum of a sequence of floats.
///
/// Keeps a list of non-overlapping partial sums (Shewchuk) so the result is
/// the correctly rounded value of the real sum, independent of input order.
pub fn exact_sum<T: Scalar, I: IntoIterator<Item = T>>(values: I) -> T {
    let mut partials: Vec<T> = Vec::new();
    for mut x in values {
        let mut kept = 0;
        for i in 0..partials.len() {
            let mut y = partials[i];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != T::zero() {
                partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        partials.truncate(kept);
        partials.push(x);
    }
    round_partials(&partials)
}

fn round_partials<T: Scalar>(partials: &[T]) -> T {
    let Some((&last, rest)) = partials.split_last() else {
        return T::zero();
    };
    let mut hi = last;
    let mut lo = T::zero();
    let mut idx = rest.len();
    while idx > 0 {
        idx -= 1;
        let x = hi;
        let y = rest[idx];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != T::zero() {
            break;
        }
    }
    // Half-way case: the remaining partials decide the rounding direction.
    if idx > 0 {
        let two = T::one() + T::one();
        let next = rest[idx - 1];
        if (lo < T::zero() && next < T::zero()) || (lo > T::zero() && next > T::zero()) {
            let y = lo * two;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
    }
    hi
}

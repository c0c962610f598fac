//! Scalar abstractions.
//!
//! Two tiers are used throughout the crate:
//!
//! * [`Field`]: exact field arithmetic (`+ - * /`, ordering). Implemented for
//!   `f32`, `f64` and [`num_rational::BigRational`]. The drift-rate vectors and
//!   the product-form chamber weights only need this tier, so they can be
//!   evaluated in exact rational arithmetic.
//! * [`Real`]: floating point (`exp`, `ln`, `sqrt`, ...). Everything that
//!   involves log-space reductions, densities or simulation lives here.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::Neg;

use num_traits::{Float, FromPrimitive, Num, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Exact field arithmetic with a total-enough ordering for sign tests.
pub trait Field: Clone + Num + Neg<Output = Self> + PartialOrd + FromPrimitive + Debug {}

impl<T> Field for T where T: Clone + Num + Neg<Output = T> + PartialOrd + FromPrimitive + Debug {}

/// Floating-point scalar: `f32` or `f64`.
pub trait Real:
    Field
    + Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Copy
    + Default
    + Display
    + LowerExp
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossless-enough conversion of a literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn from_usize_lossy(x: usize) -> Self {
        Self::from_usize(x).expect("usize representable in scalar type")
    }

    /// Absolute tolerance `base`, widened to a few ulps of `scale` when the
    /// scalar type cannot resolve `base` at that magnitude.
    #[inline]
    fn tolerance(base: f64, scale: Self) -> Self {
        Self::lit(base).max(Self::epsilon() * Self::lit(64.0) * scale.abs())
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `log(sum(exp(xs)))` without overflow.
pub fn log_sum_exp<T: Real>(xs: &[T]) -> T {
    let m = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if !m.is_finite() {
        return m;
    }
    let s: T = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// Running log-sum-exp accumulator `(max, scaled sum)`.
///
/// Merging two accumulators is exact up to rounding and is applied in a fixed
/// order by callers that need bitwise reproducibility.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp<T> {
    max: T,
    sum: T,
}

impl<T: Real> Default for LogSumExp<T> {
    fn default() -> Self {
        Self {
            max: T::neg_infinity(),
            sum: T::zero(),
        }
    }
}

impl<T: Real> LogSumExp<T> {
    pub fn push(&mut self, x: T) {
        if x <= self.max {
            self.sum += (x - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - x).exp() + T::one();
            self.max = x;
        }
    }

    pub fn merge(self, other: Self) -> Self {
        if other.max == T::neg_infinity() {
            return self;
        }
        if self.max == T::neg_infinity() {
            return other;
        }
        if self.max >= other.max {
            Self {
                max: self.max,
                sum: self.sum + other.sum * (other.max - self.max).exp(),
            }
        } else {
            Self {
                max: other.max,
                sum: other.sum + self.sum * (self.max - other.max).exp(),
            }
        }
    }

    pub fn value(&self) -> T {
        if self.max == T::neg_infinity() {
            T::neg_infinity()
        } else {
            self.max + self.sum.ln()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lse_matches_naive_for_small_values() {
        let xs = [0.1_f64, -2.0, 1.5];
        let naive = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&xs) - naive).abs() < 1e-15);
    }

    #[test]
    fn lse_survives_huge_values() {
        let xs = [1000.0_f64, 1000.0];
        assert!((log_sum_exp(&xs) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn accumulator_merge_is_order_consistent() {
        let xs: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin() * 30.0).collect();
        let mut a = LogSumExp::default();
        let mut b = LogSumExp::default();
        for &x in &xs[..20] {
            a.push(x);
        }
        for &x in &xs[20..] {
            b.push(x);
        }
        let merged = a.merge(b).value();
        assert!((merged - log_sum_exp(&xs)).abs() < 1e-12);
    }
}

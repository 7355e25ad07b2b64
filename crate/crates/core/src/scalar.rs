//! Numeric abstraction shared by the attention, policy and metric math.
//!
//! Everything that only needs field arithmetic and ordering is written against
//! [`Scalar`], so the same code runs on `f32`, `f64` and on exact rationals
//! ([`Exact`]). Exact arithmetic is what the brute-force checks use when a
//! decision sits right on a threshold.

use std::fmt::Debug;
use std::iter::Sum;

use num_rational::Ratio;
use num_traits::{FromPrimitive, Num, ToPrimitive};

/// Exact rational scalar.
pub type Exact = Ratio<i128>;

pub trait Scalar:
    Num + Copy + PartialOrd + FromPrimitive + ToPrimitive + Sum + Debug + Send + Sync + 'static
{
    fn from_usize_exact(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable in scalar")
    }

    /// Lossy conversion used for tolerances and config values.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    fn abs_diff(self, other: Self) -> Self {
        if self >= other {
            self - other
        } else {
            other - self
        }
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
impl Scalar for Exact {
    /// The shortest decimal that round-trips to `v`, taken exactly, so a
    /// configured `0.2` is `1/5` rather than the nearest binary fraction.
    fn lit(v: f64) -> Self {
        decimal_ratio(v).unwrap_or_else(|| Ratio::from_f64(v).expect("finite literal"))
    }
}

fn decimal_ratio(v: f64) -> Option<Exact> {
    let text = format!("{v:e}");
    let (mantissa, exp) = text.split_once('e')?;
    let mut exp: i32 = exp.parse().ok()?;
    let (neg, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => (true, m),
        None => (false, mantissa),
    };
    let (int, frac) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    exp -= frac.len() as i32;
    let mut digits: i128 = format!("{int}{frac}").parse().ok()?;
    if neg {
        digits = -digits;
    }
    let scale = 10i128.checked_pow(exp.unsigned_abs())?;
    Some(if exp >= 0 {
        Ratio::from_integer(digits.checked_mul(scale)?)
    } else {
        Ratio::new(digits, scale)
    })
}

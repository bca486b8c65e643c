//! Numeric abstraction shared by the pricing, fair-share and linear-programming code.
//!
//! Everything numeric in those modules is written against [`Scalar`], so the same
//! code runs on `f32`/`f64` for speed and on [`BigRational`] when an exact answer
//! is needed (oracle checks, degenerate LPs).

use std::fmt::{Debug, Display};

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{FromPrimitive, Num, Signed, ToPrimitive};

/// A real-like number usable by the numeric kernels.
pub trait Scalar:
    Num + Signed + Clone + PartialOrd + Debug + Display + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// Values with magnitude at or below this are treated as zero.
    fn tolerance() -> Self;

    /// Lossy conversion from `f64`; exact types convert the binary value exactly.
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite value")
    }

    /// Parse a decimal literal; exact types keep it exact.
    fn from_decimal(text: &str) -> Option<Self> {
        Self::from_f64(text.trim().parse::<f64>().ok()?)
    }

    fn from_u64_exact(v: u64) -> Self {
        Self::from_u64(v).expect("u64 fits")
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn is_negligible(&self) -> bool {
        self.abs() <= Self::tolerance()
    }

    fn max_of(a: Self, b: Self) -> Self {
        if a >= b {
            a
        } else {
            b
        }
    }

    fn min_of(a: Self, b: Self) -> Self {
        if a <= b {
            a
        } else {
            b
        }
    }

    /// Largest integer not above `self`.
    fn floor_value(&self) -> Self;
}

impl Scalar for f64 {
    fn tolerance() -> Self {
        1e-11
    }

    fn floor_value(&self) -> Self {
        self.floor()
    }
}

impl Scalar for f32 {
    fn tolerance() -> Self {
        1e-5
    }

    fn floor_value(&self) -> Self {
        self.floor()
    }
}

impl Scalar for BigRational {
    fn tolerance() -> Self {
        BigRational::from_integer(BigInt::from(0))
    }

    fn from_decimal(text: &str) -> Option<Self> {
        rational_from_decimal(text)
    }

    fn floor_value(&self) -> Self {
        self.floor()
    }
}

/// Exact rational from a decimal string such as `"0.15"` or `"3"`.
pub fn rational_from_decimal(text: &str) -> Option<BigRational> {
    let text = text.trim();
    let (negative, digits) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    let (whole, frac) = digits.split_once('.').unwrap_or((digits, ""));
    if whole.is_empty() && frac.is_empty() {
        return None;
    }
    let numer: BigInt = format!("{whole}{frac}").parse().ok()?;
    let denom = num::pow(BigInt::from(10), frac.len());
    let r = BigRational::new(numer, denom);
    Some(if negative { -r } else { r })
}

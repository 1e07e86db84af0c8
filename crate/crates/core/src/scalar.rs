//! Scalar abstraction: the numeric code is generic over f32/f64.
//!
//! The binary file formats and the CLI pin f64 (see the crate-root aliases);
//! f32 is available through the same generic surface.

use num_traits::{Float, NumAssign};

pub trait Scalar:
    Float + NumAssign + std::fmt::Debug + std::fmt::Display + Send + Sync + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// Logistic squashing onto (0, 1).
pub fn logistic<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

/// Inverse of [`logistic`]; `p` must lie strictly inside (0, 1).
pub fn logit<S: Scalar>(p: S) -> S {
    (p / (S::one() - p)).ln()
}

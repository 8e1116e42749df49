//! Scalar abstractions shared by the numerical modules.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{Add, Div, Mul};

use num_traits::{Float, FloatConst, FromPrimitive, One, ToPrimitive, Zero};

/// Real scalar used by the floating point kernels (`f32` or `f64`).
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Default + Debug + Send + Sync + 'static
{
    /// Converts an `f64` literal into the scalar type.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Probability weight used by exact enumeration tables.
///
/// Implemented for `f64` and for exact rationals (`BigRational`), so the
/// same enumeration code yields either floating point or exact laws.
pub trait Weight:
    Clone
    + Zero
    + One
    + Add<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + FromPrimitive
    + ToPrimitive
    + PartialOrd
    + Debug
    + Send
    + Sync
{
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable")
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Weight for T where
    T: Clone
        + Zero
        + One
        + Add<Output = T>
        + Mul<Output = T>
        + Div<Output = T>
        + FromPrimitive
        + ToPrimitive
        + PartialOrd
        + Debug
        + Send
        + Sync
{
}

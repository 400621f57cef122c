//! Floating-point element type used throughout the crate.
//!
//! Everything numeric is generic over [`Scalar`]. `f64` is the working
//! precision: finite-difference gradient checks at `1e-5` relative error are
//! only meaningful there. `f32` is supported for the forward/backward paths and
//! training, but not for the tight gradient tolerances.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Short name recorded in checkpoints.
    const NAME: &'static str;

    /// Converts an `f64` literal or sample. Lossy for `f32`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";
}

/// Converts a slice of `f64` into the working scalar type.
pub fn cast_slice<S: Scalar>(xs: &[f64]) -> Vec<S> {
    xs.iter().map(|&x| S::lit(x)).collect()
}

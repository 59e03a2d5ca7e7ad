//! Scalar abstraction. All numeric code is generic over [`Scalar`] so the
//! same kernels run in f64 (gradient checks, training) and f32 (checkpoint
//! storage precision).

use std::fmt::{Debug, Display};
use std::iter::Sum;

pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an f64 literal into the scalar type.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal converts to scalar")
    }

    /// Converts the scalar to f64 for reporting and serialization.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

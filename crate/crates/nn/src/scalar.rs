//! Scalar abstraction so every layer runs in f32 (pipelines) or f64
//! (gradient checks) without duplication.

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + ScalarOperand
    + LinalgScalar
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::ops::DivAssign
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    /// Constant conversion from f64.
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("constant not representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("value not representable as f64")
    }

    fn as_f32(self) -> f32 {
        self.to_f32().expect("value not representable as f32")
    }
}

impl Real for f32 {}
impl Real for f64 {}

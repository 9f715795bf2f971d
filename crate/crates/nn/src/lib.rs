//! Minimal CPU neural-network substrate.
//!
//! Layers carry their parameters and expose explicit `forward` /
//! `backward` passes; there is no tape. Backward passes return the
//! gradient with respect to the input and, when asked, fill a mirror
//! gradient struct for the parameters. All batch-level parallelism uses
//! fixed chunk boundaries so results are bit-identical regardless of
//! thread count.

pub mod act;
pub mod adam;
pub mod conv;
pub mod dropout;
pub mod init;
pub mod linear;
pub mod loss;
pub mod norm;
pub mod numeric;
pub mod pool;
pub mod scalar;

pub use act::{relu, relu_backward};
pub use adam::Adam;
pub use conv::{Conv2d, Conv2dGrads};
pub use linear::{Linear, LinearGrads};
pub use norm::{BatchNorm2d, BatchNorm2dGrads, BnCache};
pub use scalar::Real;

/// Fixed batch-chunk size used by deterministic parallel reductions.
pub(crate) const GRAD_CHUNK: usize = 8;

/// Elementwise sign with sign(0) = 0.
pub fn sign<F: Real>(v: F) -> F {
    if v > F::zero() {
        F::one()
    } else if v < F::zero() {
        -F::one()
    } else {
        F::zero()
    }
}

//! Inverted dropout; the mask is drawn in row-major order from the
//! supplied generator.

use ndarray::Array2;
use rand::{Rng, RngExt};

use crate::scalar::Real;

/// Returns the dropped activations and the mask (0 or 1/(1-p)).
pub fn dropout<F: Real, R: Rng>(x: &Array2<F>, p: f64, rng: &mut R) -> (Array2<F>, Array2<F>) {
    assert!((0.0..1.0).contains(&p), "dropout rate must be in [0, 1)");
    let keep = F::c(1.0 / (1.0 - p));
    let mask = Array2::from_shape_simple_fn(x.raw_dim(), || {
        if rng.random::<f64>() < p {
            F::zero()
        } else {
            keep
        }
    });
    (x * &mask, mask)
}

pub fn dropout_backward<F: Real>(mask: &Array2<F>, gout: &Array2<F>) -> Array2<F> {
    gout * mask
}

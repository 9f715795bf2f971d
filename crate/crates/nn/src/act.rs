//! Activations.

use ndarray::{Array, Dimension};

use crate::scalar::Real;

pub fn relu<F: Real, D: Dimension>(x: &Array<F, D>) -> Array<F, D> {
    x.mapv(|v| if v > F::zero() { v } else { F::zero() })
}

/// Backward from the activation *output*: x > 0 iff relu(x) > 0.
pub fn relu_backward<F: Real, D: Dimension>(y: &Array<F, D>, gout: &Array<F, D>) -> Array<F, D> {
    let mut dx = gout.clone();
    ndarray::Zip::from(&mut dx).and(y).for_each(|d, &yv| {
        if yv <= F::zero() {
            *d = F::zero();
        }
    });
    dx
}

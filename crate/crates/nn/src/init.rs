//! Parameter initialization. Kernels use uniform He-style fan-in
//! scaling; draws happen in row-major order so a given seed always
//! produces the same parameters.

use ndarray::{Array1, Array2, Array3, Array4};
use rand::{Rng, RngExt};

use crate::scalar::Real;

fn he_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

pub fn he_uniform_4d<F: Real, R: Rng>(
    rng: &mut R,
    shape: (usize, usize, usize, usize),
) -> Array4<F> {
    let fan_in = shape.1 * shape.2 * shape.3;
    let b = he_bound(fan_in);
    Array4::from_shape_simple_fn(shape, || F::c(rng.random_range(-b..b)))
}

pub fn he_uniform_3d<F: Real, R: Rng>(rng: &mut R, shape: (usize, usize, usize)) -> Array3<F> {
    let fan_in = shape.1 * shape.2;
    let b = he_bound(fan_in);
    Array3::from_shape_simple_fn(shape, || F::c(rng.random_range(-b..b)))
}

pub fn he_uniform_2d<F: Real, R: Rng>(rng: &mut R, shape: (usize, usize)) -> Array2<F> {
    let fan_in = shape.1;
    let b = he_bound(fan_in);
    Array2::from_shape_simple_fn(shape, || F::c(rng.random_range(-b..b)))
}

pub fn zeros_1d<F: Real>(len: usize) -> Array1<F> {
    Array1::zeros(len)
}

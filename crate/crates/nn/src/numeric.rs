//! Finite-difference utilities used as independent gradient oracles.

use ndarray::ArrayD;

use crate::scalar::Real;

/// Central-difference gradient of a scalar function at `x`.
pub fn numeric_grad<F: Real>(
    mut f: impl FnMut(&ArrayD<F>) -> F,
    x: &ArrayD<F>,
    step: F,
) -> ArrayD<F> {
    let mut g = ArrayD::zeros(x.raw_dim());
    let mut probe = x.clone();
    for idx in 0..x.len() {
        let orig = probe.as_slice_mut().unwrap()[idx];
        probe.as_slice_mut().unwrap()[idx] = orig + step;
        let hi = f(&probe);
        probe.as_slice_mut().unwrap()[idx] = orig - step;
        let lo = f(&probe);
        probe.as_slice_mut().unwrap()[idx] = orig;
        g.as_slice_mut().unwrap()[idx] = (hi - lo) / (step + step);
    }
    g
}

/// Relative error between an analytic and a numeric gradient.
pub fn rel_error<F: Real>(analytic: &ArrayD<F>, numeric: &ArrayD<F>) -> F {
    let num = analytic
        .iter()
        .zip(numeric.iter())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<F>()
        .sqrt();
    let den = analytic
        .iter()
        .map(|&a| a * a)
        .sum::<F>()
        .sqrt()
        .max(numeric.iter().map(|&b| b * b).sum::<F>().sqrt())
        .max(F::c(1e-12));
    num / den
}

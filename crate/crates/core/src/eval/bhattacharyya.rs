//! Bhattacharyya distance between diagonal Gaussian fits of two sample
//! populations, computed in log space with a variance floor.

use ndarray::Array2;

use featsent_nn::Real;

use crate::error::{Error, Result};

const VAR_FLOOR: f64 = 1e-8;

/// Fit diagonal Gaussians (population moments) to the rows of each
/// sample matrix and return
/// 1/8 (m1-m2)' S^-1 (m1-m2) + 1/2 ln(det S / sqrt(det S1 det S2))
/// with S = (S1+S2)/2.
pub fn bhattacharyya_gaussian<F: Real>(a: &Array2<F>, b: &Array2<F>) -> Result<F> {
    let (na, d) = a.dim();
    let (nb, db) = b.dim();
    if d != db {
        return Err(Error::ShapeMismatch(format!(
            "sample dimensions differ: {d} vs {db}"
        )));
    }
    if na < 2 || nb < 2 {
        return Err(Error::InvalidConfig(
            "each side needs at least 2 samples".into(),
        ));
    }
    let moments = |m: &Array2<F>| -> (Vec<f64>, Vec<f64>) {
        let n = m.nrows() as f64;
        let mut mean = vec![0.0f64; d];
        let mut var = vec![0.0f64; d];
        for row in m.outer_iter() {
            for (k, v) in row.iter().enumerate() {
                mean[k] += v.as_f64();
            }
        }
        for mk in mean.iter_mut() {
            *mk /= n;
        }
        for row in m.outer_iter() {
            for (k, v) in row.iter().enumerate() {
                let dv = v.as_f64() - mean[k];
                var[k] += dv * dv;
            }
        }
        for vk in var.iter_mut() {
            *vk = (*vk / n).max(VAR_FLOOR);
        }
        (mean, var)
    };
    let (m1, v1) = moments(a);
    let (m2, v2) = moments(b);
    let mut quad = 0.0f64;
    let mut logdet = 0.0f64;
    for k in 0..d {
        let pooled = (v1[k] + v2[k]) / 2.0;
        let dm = m1[k] - m2[k];
        quad += dm * dm / pooled;
        logdet += pooled.ln() - 0.5 * (v1[k].ln() + v2[k].ln());
    }
    Ok(F::c(quad / 8.0 + logdet / 2.0))
}

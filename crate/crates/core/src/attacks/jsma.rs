//! Saliency-map attack: perturbs the pixels whose softmax Jacobian most
//! favors the target class, one pixel per step, under a budget on the
//! fraction of modified pixels.

use ndarray::{Array1, Array2, Array4, Axis};
use rayon::prelude::*;

use featsent_nn::loss::softmax;
use featsent_nn::Real;

use crate::classifier::argmax_rows;
use crate::error::{Error, Result};

use super::DiffModel;

#[derive(Debug, Clone)]
pub struct JsmaOutcome<F> {
    pub x_adv: Array4<F>,
    pub pixels_modified: usize,
    pub success: bool,
}

pub fn jsma<F: Real>(
    model: &(impl DiffModel<F> + Sync),
    x: &Array4<F>,
    targets: &[usize],
    theta: f64,
    gamma: f64,
) -> Result<Vec<JsmaOutcome<F>>> {
    if !(0.0 < theta && theta <= 1.0) || !(0.0 < gamma && gamma <= 1.0) {
        return Err(Error::InvalidConfig("theta and gamma must be in (0, 1]".into()));
    }
    let n = x.dim().0;
    let results: Vec<Result<JsmaOutcome<F>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = x.index_axis(Axis(0), i).to_owned().insert_axis(Axis(0));
            jsma_single(model, &xi, targets[i], theta, gamma)
        })
        .collect();
    results.into_iter().collect()
}

/// Saliency of every pixel for the target class, given the softmax
/// Jacobian columns alpha (d p_t / d x) and beta (sum over other classes).
pub fn saliency_map<F: Real>(alpha: &Array1<F>, beta: &Array1<F>) -> Array1<F> {
    let mut s = Array1::zeros(alpha.len());
    for i in 0..alpha.len() {
        if alpha[i] < F::zero() || beta[i] > F::zero() {
            s[i] = F::zero();
        } else {
            s[i] = alpha[i] * beta[i].abs();
        }
    }
    s
}

pub fn jsma_single<F: Real>(
    model: &impl DiffModel<F>,
    x0: &Array4<F>,
    target: usize,
    theta: f64,
    gamma: f64,
) -> Result<JsmaOutcome<F>> {
    let k = model.num_classes();
    let pixels = x0.len();
    let budget = ((gamma * pixels as f64).floor() as usize).max(1);
    let step = F::c(theta);
    let mut x = x0.clone();
    let mut modified = vec![false; pixels];
    let mut modified_count = 0usize;
    // Re-picking a pixel is allowed until it saturates; the iteration cap
    // covers the worst case of theta-sized increments.
    let max_steps = budget * ((1.0 / theta).ceil() as usize + 1);
    for _ in 0..max_steps {
        // Two replicated rows give both Jacobian aggregates in one
        // batched backward: d p_t / d x and sum over other classes.
        let x_rep = {
            let (_, c, w, h) = x.dim();
            let mut out = Array4::zeros((2, c, w, h));
            for mut row in out.outer_iter_mut() {
                row.assign(&x.index_axis(Axis(0), 0));
            }
            out
        };
        let (logits, back) = model.logits_with_backprop(&x_rep);
        if argmax_rows(&logits)[0] == target {
            return Ok(JsmaOutcome {
                x_adv: x,
                pixels_modified: modified_count,
                success: true,
            });
        }
        let p = softmax(&logits).index_axis(Axis(0), 0).to_owned();
        let mut dlogits = Array2::zeros((2, k));
        for c in 0..k {
            for j in 0..k {
                let delta = if j == c { F::one() } else { F::zero() };
                let v = p[c] * (delta - p[j]);
                if c == target {
                    dlogits[[0, j]] += v;
                } else {
                    dlogits[[1, j]] += v;
                }
            }
        }
        let g = back(&dlogits);
        let alpha = g
            .index_axis(Axis(0), 0)
            .to_owned()
            .into_shape_with_order(pixels)
            .expect("contiguous");
        let beta = g
            .index_axis(Axis(0), 1)
            .to_owned()
            .into_shape_with_order(pixels)
            .expect("contiguous");
        let mut s = saliency_map(&alpha, &beta);
        // Saturated pixels cannot increase further.
        let x_flat = x.view().into_shape_with_order(pixels).expect("contiguous");
        for i in 0..pixels {
            if x_flat[i] >= F::one() {
                s[i] = F::zero();
            }
        }
        let best = (0..pixels).fold(0usize, |b, i| if s[i] > s[b] { i } else { b });
        if s[best] <= F::zero() {
            return Ok(JsmaOutcome {
                x_adv: x,
                pixels_modified: modified_count,
                success: false,
            });
        }
        {
            let mut x_flat = x.view_mut().into_shape_with_order(pixels).expect("contiguous");
            x_flat[best] = (x_flat[best] + step).min(F::one());
        }
        if !modified[best] {
            modified[best] = true;
            modified_count += 1;
        }
        if modified_count >= budget {
            break;
        }
    }
    let success = argmax_rows(&model.logits(&x))[0] == target;
    Ok(JsmaOutcome {
        x_adv: x,
        pixels_modified: modified_count,
        success,
    })
}

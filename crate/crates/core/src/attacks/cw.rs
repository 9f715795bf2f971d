//! Minimum-l2 targeted attack: margin loss weighted by a constant tuned
//! with binary search, box kept through the tanh change of variables.

use ndarray::{Array2, Array4, Axis};
use rayon::prelude::*;

use featsent_nn::{Adam, Real};

use crate::classifier::argmax_rows;
use crate::error::Result;

use super::DiffModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CwParams {
    pub binary_search_steps: usize,
    pub steps: usize,
    pub stepsize: f64,
    pub confidence: f64,
    pub initial_const: f64,
}

impl Default for CwParams {
    fn default() -> Self {
        Self {
            binary_search_steps: 5,
            steps: 1000,
            stepsize: 0.01,
            confidence: 0.8,
            initial_const: 0.1,
        }
    }
}

/// Bisection step for the loss constant: success shrinks the next trial,
/// failure grows it (x10 until an upper bound exists).
pub fn binary_search_update(lo: f64, hi: f64, a: f64, success: bool) -> (f64, f64, f64) {
    let (lo, hi) = if success { (lo, a) } else { (a, hi) };
    let next = if hi.is_finite() { (lo + hi) / 2.0 } else { a * 10.0 };
    (lo, hi, next)
}

#[derive(Debug, Clone)]
pub struct CwOutcome<F> {
    pub x_adv: Array4<F>,
    pub l2: f64,
    pub success: bool,
}

pub fn cw_l2<F: Real>(
    model: &(impl DiffModel<F> + Sync),
    x: &Array4<F>,
    targets: &[usize],
    params: &CwParams,
) -> Result<Vec<CwOutcome<F>>> {
    let n = x.dim().0;
    let results: Vec<Result<CwOutcome<F>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = x.index_axis(Axis(0), i).to_owned().insert_axis(Axis(0));
            Ok(cw_single(model, &xi, targets[i], params))
        })
        .collect();
    results.into_iter().collect()
}

/// Margin loss max(max_{j != t} z_j - z_t, -confidence) and its logits
/// gradient (zero on the flat part).
fn margin_loss<F: Real>(logits: &Array2<F>, target: usize, confidence: f64) -> (F, Array2<F>) {
    let k = logits.ncols();
    let z = logits.index_axis(Axis(0), 0);
    let mut best_other = usize::MAX;
    for j in 0..k {
        if j != target && (best_other == usize::MAX || z[j] > z[best_other]) {
            best_other = j;
        }
    }
    let margin = z[best_other] - z[target];
    let floor = F::c(-confidence);
    let mut d = Array2::zeros((1, k));
    let loss = if margin > floor {
        d[[0, best_other]] = F::one();
        d[[0, target]] = -F::one();
        margin
    } else {
        floor
    };
    (loss, d)
}

fn cw_single<F: Real>(
    model: &impl DiffModel<F>,
    x0: &Array4<F>,
    target: usize,
    params: &CwParams,
) -> CwOutcome<F> {
    let eps = 1e-6;
    let v0 = x0.mapv(|v| {
        let t = (v.as_f64() * 2.0 - 1.0).clamp(-1.0 + eps, 1.0 - eps);
        F::c(t.atanh())
    });
    let mut a = params.initial_const;
    let mut lo = 0.0f64;
    let mut hi = f64::INFINITY;
    let mut best: Option<(f64, Array4<F>)> = None;

    for _ in 0..params.binary_search_steps {
        let mut v = v0.clone().into_dyn();
        let mut opt: Adam<F> = Adam::new(F::c(params.stepsize));
        let mut round_success = false;
        for _ in 0..params.steps {
            let x_adv = v
                .mapv(|t| (t.tanh() + F::one()) * F::c(0.5))
                .into_dimensionality::<ndarray::Ix4>()
                .expect("shape preserved");
            let delta = &x_adv - x0;
            let (logits, back) = model.logits_with_backprop(&x_adv);
            if argmax_rows(&logits)[0] == target {
                round_success = true;
                let l2 = delta.iter().map(|&d| d.as_f64() * d.as_f64()).sum::<f64>().sqrt();
                if best.as_ref().map_or(true, |(b, _)| l2 < *b) {
                    best = Some((l2, x_adv.clone()));
                }
            }
            let (loss, dmargin) = margin_loss(&logits, target, params.confidence);
            let mut dx = delta.mapv(|d| d + d); // gradient of ||delta||^2
            if loss > F::c(-params.confidence) {
                dx += &back(&dmargin).mapv(|g| g * F::c(a));
            }
            // Chain through x = (tanh(v)+1)/2.
            let dv = ndarray::Zip::from(&dx)
                .and(&v.view().into_dimensionality::<ndarray::Ix4>().expect("shape"))
                .map_collect(|&gx, &tv| {
                    let th = tv.tanh();
                    gx * (F::one() - th * th) * F::c(0.5)
                })
                .into_dyn();
            opt.step(vec![v.view_mut()], &[dv.view()]);
        }
        (lo, hi, a) = binary_search_update(lo, hi, a, round_success);
    }

    match best {
        Some((l2, x_adv)) => CwOutcome {
            x_adv,
            l2,
            success: true,
        },
        None => CwOutcome {
            x_adv: x0.clone(),
            l2: 0.0,
            success: false,
        },
    }
}

//! Elastic-net attack: margin loss plus l1 and squared-l2 perturbation
//! penalties, optimized by iterative shrinkage-thresholding with FISTA
//! momentum.

use ndarray::{Array4, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use featsent_nn::Real;

use crate::classifier::argmax_rows;
use crate::error::Result;

use super::DiffModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DecisionRule {
    /// Pick the successful candidate with the smallest l1 distance.
    #[default]
    #[serde(rename = "L1", alias = "l1")]
    L1,
    /// Pick by the elastic-net distance beta*l1 + l2^2.
    #[serde(rename = "EN", alias = "en")]
    ElasticNet,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EadParams {
    pub binary_search_steps: usize,
    pub steps: usize,
    pub confidence: f64,
    pub initial_const: f64,
    pub beta: f64,
    pub initial_stepsize: f64,
    pub decision_rule: DecisionRule,
}

impl Default for EadParams {
    fn default() -> Self {
        Self {
            binary_search_steps: 9,
            steps: 1000,
            confidence: 0.8,
            initial_const: 0.1,
            beta: 0.01,
            initial_stepsize: 0.01,
            decision_rule: DecisionRule::L1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EadOutcome<F> {
    pub x_adv: Array4<F>,
    pub l1: f64,
    pub success: bool,
}

/// Soft-thresholding operator: shrink(d, beta) = sign(d) * max(|d|-beta, 0).
pub fn soft_threshold(d: f64, beta: f64) -> f64 {
    if d > beta {
        d - beta
    } else if d < -beta {
        d + beta
    } else {
        0.0
    }
}

/// The elastic-net objective a*L + beta*||d||_1 + ||d||_2^2; with beta = 0
/// it reduces to the l2-plus-margin objective.
pub fn ead_objective(a: f64, margin_loss: f64, beta: f64, delta: &[f64]) -> f64 {
    let l1: f64 = delta.iter().map(|d| d.abs()).sum();
    let l2sq: f64 = delta.iter().map(|d| d * d).sum();
    a * margin_loss + beta * l1 + l2sq
}

/// Distance used to pick among successful candidates.
pub fn decision_distance(rule: DecisionRule, beta: f64, l1: f64, l2_squared: f64) -> f64 {
    match rule {
        DecisionRule::L1 => l1,
        DecisionRule::ElasticNet => beta * l1 + l2_squared,
    }
}

pub fn ead<F: Real>(
    model: &(impl DiffModel<F> + Sync),
    x: &Array4<F>,
    targets: &[usize],
    params: &EadParams,
) -> Result<Vec<EadOutcome<F>>> {
    let n = x.dim().0;
    let results: Vec<Result<EadOutcome<F>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = x.index_axis(Axis(0), i).to_owned().insert_axis(Axis(0));
            Ok(ead_single(model, &xi, targets[i], params))
        })
        .collect();
    results.into_iter().collect()
}

fn margin_and_grad<F: Real>(
    model: &impl DiffModel<F>,
    x: &Array4<F>,
    target: usize,
    confidence: f64,
) -> (bool, F, Array4<F>) {
    let (logits, back) = model.logits_with_backprop(x);
    let k = logits.ncols();
    let z = logits.index_axis(Axis(0), 0);
    let mut best_other = if target == 0 { 1 } else { 0 };
    for j in 0..k {
        if j != target && z[j] > z[best_other] {
            best_other = j;
        }
    }
    let margin = z[best_other] - z[target];
    let floor = F::c(-confidence);
    let is_target = argmax_rows(&logits)[0] == target;
    if margin > floor {
        let mut d = ndarray::Array2::zeros((1, k));
        d[[0, best_other]] = F::one();
        d[[0, target]] = -F::one();
        (is_target, margin, back(&d))
    } else {
        (is_target, floor, Array4::zeros(x.raw_dim()))
    }
}

/// Shrink `z` toward `x0` by beta and clamp to the box.
fn shrink_project<F: Real>(z: &Array4<F>, x0: &Array4<F>, beta: f64) -> Array4<F> {
    ndarray::Zip::from(z).and(x0).map_collect(|&zv, &xv| {
        let s = soft_threshold((zv - xv).as_f64(), beta);
        F::c((xv.as_f64() + s).clamp(0.0, 1.0))
    })
}

fn ead_single<F: Real>(
    model: &impl DiffModel<F>,
    x0: &Array4<F>,
    target: usize,
    params: &EadParams,
) -> EadOutcome<F> {
    let mut a = params.initial_const;
    let mut lo = 0.0f64;
    let mut hi = f64::INFINITY;
    let mut best: Option<(f64, f64, Array4<F>)> = None; // (rule distance, l1, x)

    let distance = |delta: &Array4<F>| -> (f64, f64) {
        let l1: f64 = delta.iter().map(|d| d.as_f64().abs()).sum();
        let l2sq: f64 = delta.iter().map(|d| d.as_f64() * d.as_f64()).sum();
        (decision_distance(params.decision_rule, params.beta, l1, l2sq), l1)
    };

    for _ in 0..params.binary_search_steps {
        let mut x_k = x0.clone();
        let mut y_k = x0.clone();
        let mut round_success = false;
        for k in 0..params.steps {
            let lr = params.initial_stepsize * (1.0 - k as f64 / params.steps as f64).sqrt();
            let (_, _, g_margin) = margin_and_grad(model, &y_k, target, params.confidence);
            let grad = ndarray::Zip::from(&g_margin)
                .and(&y_k)
                .and(x0)
                .map_collect(|&gm, &yv, &xv| gm * F::c(a) + (yv - xv) * F::c(2.0));
            let z = ndarray::Zip::from(&y_k)
                .and(&grad)
                .map_collect(|&yv, &gv| yv - F::c(lr) * gv);
            let x_next = shrink_project(&z, x0, params.beta);
            let (is_target, _, _) = margin_and_grad(model, &x_next, target, params.confidence);
            if is_target {
                round_success = true;
                let delta = &x_next - x0;
                let (rule, l1) = distance(&delta);
                if best.as_ref().map_or(true, |(b, _, _)| rule < *b) {
                    best = Some((rule, l1, x_next.clone()));
                }
            }
            let momentum = F::c(k as f64 / (k as f64 + 3.0));
            y_k = ndarray::Zip::from(&x_next)
                .and(&x_k)
                .map_collect(|&xn, &xp| xn + momentum * (xn - xp));
            x_k = x_next;
        }
        (lo, hi, a) = super::cw::binary_search_update(lo, hi, a, round_success);
    }

    match best {
        Some((_, l1, x_adv)) => EadOutcome {
            x_adv,
            l1,
            success: true,
        },
        None => EadOutcome {
            x_adv: x0.clone(),
            l1: 0.0,
            success: false,
        },
    }
}

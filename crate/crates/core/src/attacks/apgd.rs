//! Auto-PGD: projected gradient ascent with momentum, a halving step
//! schedule driven by checkpointed progress, and best-iterate tracking.
//! Runs with the cross-entropy or the difference-of-logits-ratio loss.

use ndarray::{s, Array1, Array2, Array4, ArrayView1, Axis};
use rand::rngs::StdRng;

use featsent_nn::loss::{ce_per_example, softmax};
use featsent_nn::{sign, Real};

use crate::error::{Error, Result};

use super::fgsm_pgd::{project_ball, random_start};
use super::DiffModel;

/// -(z_y - max_{i != y} z_i) / (z_(1) - z_(3)); shift- and
/// scale-invariant. Needs at least three classes.
pub fn dlr_loss<F: Real>(z: &ArrayView1<F>, y: usize) -> Result<F> {
    let k = z.len();
    if k < 3 {
        return Err(Error::InvalidConfig(format!(
            "dlr loss needs at least 3 classes, got {k}"
        )));
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| z[b].partial_cmp(&z[a]).unwrap_or(std::cmp::Ordering::Equal));
    let denom = z[order[0]] - z[order[2]];
    if denom == F::zero() {
        return Err(Error::Degenerate(
            "dlr denominator z_(1) - z_(3) is zero".into(),
        ));
    }
    let mut max_other = if y == 0 { 1 } else { 0 };
    for i in 0..k {
        if i != y && z[i] > z[max_other] {
            max_other = i;
        }
    }
    Ok(-(z[y] - z[max_other]) / denom)
}

pub fn dlr_per_example<F: Real>(logits: &Array2<F>, labels: &[usize]) -> Result<Array1<F>> {
    let mut out = Array1::zeros(labels.len());
    for (i, &y) in labels.iter().enumerate() {
        out[i] = dlr_loss(&logits.index_axis(Axis(0), i), y)?;
    }
    Ok(out)
}

/// Gradient of the DLR loss on the logits, treating the sort as locally
/// constant.
pub fn dlr_grad_logits<F: Real>(logits: &Array2<F>, labels: &[usize]) -> Result<Array2<F>> {
    let k = logits.ncols();
    let mut grad = Array2::zeros(logits.raw_dim());
    for (i, &y) in labels.iter().enumerate() {
        let z = logits.index_axis(Axis(0), i);
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| z[b].partial_cmp(&z[a]).unwrap_or(std::cmp::Ordering::Equal));
        let denom = z[order[0]] - z[order[2]];
        if denom == F::zero() {
            return Err(Error::Degenerate("dlr denominator is zero".into()));
        }
        let mut max_other = if y == 0 { 1 } else { 0 };
        for j in 0..k {
            if j != y && z[j] > z[max_other] {
                max_other = j;
            }
        }
        let num = z[y] - z[max_other];
        let mut row = grad.slice_mut(s![i, ..]);
        row[y] -= F::one() / denom;
        row[max_other] += F::one() / denom;
        let corner = num / (denom * denom);
        row[order[0]] += corner;
        row[order[2]] -= corner;
    }
    Ok(grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApgdLoss {
    Ce,
    Dlr,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApgdParams {
    pub eps: f64,
    pub iters: usize,
    pub loss: ApgdLoss,
    /// Weight of the previous-step history term (0.25 in the published
    /// schedule, where the new step carries 0.75).
    pub history_weight: f64,
    pub use_schedule: bool,
    pub rho: f64,
    /// Initial step size; 2*eps when unset.
    pub step_init: Option<f64>,
    pub random_start: bool,
}

impl ApgdParams {
    pub fn new(eps: f64, iters: usize, loss: ApgdLoss) -> Self {
        Self {
            eps,
            iters,
            loss,
            history_weight: 0.25,
            use_schedule: true,
            rho: 0.75,
            step_init: None,
            random_start: false,
        }
    }
}

/// Checkpoint steps: p_0 = 0, p_1 = 0.22, p_{j+1} = p_j +
/// max(p_j - p_{j-1} - 0.03, 0.06), scaled by the iteration count.
fn checkpoints(iters: usize) -> Vec<usize> {
    let mut ps = vec![0.0f64, 0.22];
    while *ps.last().unwrap() < 1.0 {
        let last = ps[ps.len() - 1];
        let prev = ps[ps.len() - 2];
        ps.push(last + (last - prev - 0.03).max(0.06));
    }
    let mut ws: Vec<usize> = ps
        .iter()
        .map(|p| (p * iters as f64).ceil() as usize)
        .filter(|&w| w > 0 && w < iters)
        .collect();
    ws.dedup();
    ws
}

pub fn apgd<F: Real>(
    model: &impl DiffModel<F>,
    x: &Array4<F>,
    labels: &[usize],
    params: &ApgdParams,
    rng: &mut StdRng,
) -> Result<Array4<F>> {
    apgd_traced(model, x, labels, params, rng, None)
}

#[allow(clippy::too_many_arguments)]
pub fn apgd_traced<F: Real>(
    model: &impl DiffModel<F>,
    x: &Array4<F>,
    labels: &[usize],
    params: &ApgdParams,
    rng: &mut StdRng,
    mut trace: Option<&mut Vec<Array4<F>>>,
) -> Result<Array4<F>> {
    if params.iters < 2 {
        return Err(Error::InvalidConfig("apgd needs at least 2 iterations".into()));
    }
    if !x.iter().all(|v| v.is_finite() && *v >= F::zero() && *v <= F::one()) {
        return Err(Error::NonFinite("attack input not in [0, 1]".into()));
    }
    let n = x.dim().0;
    let objective = |logits: &Array2<F>| -> Result<Array1<F>> {
        match params.loss {
            ApgdLoss::Ce => Ok(ce_per_example(logits, labels)),
            ApgdLoss::Dlr => dlr_per_example(logits, labels),
        }
    };
    let grad_logits = |logits: &Array2<F>| -> Result<Array2<F>> {
        match params.loss {
            ApgdLoss::Ce => {
                let mut d = softmax(logits);
                for (i, &y) in labels.iter().enumerate() {
                    d[[i, y]] -= F::one();
                }
                Ok(d)
            }
            ApgdLoss::Dlr => dlr_grad_logits(logits, labels),
        }
    };

    let mut cur = if params.random_start {
        random_start(x, params.eps, rng)
    } else {
        x.clone()
    };
    let mut prev = cur.clone();
    let mut eta = vec![params.step_init.unwrap_or(2.0 * params.eps); n];
    let mut best = cur.clone();
    let (logits0, _) = model.logits_with_backprop(&cur);
    let mut f_best: Array1<F> = objective(&logits0)?;
    let mut f_prev = f_best.clone();

    let ckpts = checkpoints(params.iters);
    let mut next_ckpt = 0usize;
    let mut improved = vec![0usize; n];
    let mut last_span = ckpts.first().copied().unwrap_or(params.iters);
    let mut eta_at_ckpt = eta.clone();
    let mut fbest_at_ckpt = f_best.clone();

    for k in 0..params.iters {
        let (logits, back) = model.logits_with_backprop(&cur);
        let f_cur = objective(&logits)?;
        for i in 0..n {
            if k > 0 && f_cur[i] > f_prev[i] {
                improved[i] += 1;
            }
            if f_cur[i] > f_best[i] {
                f_best[i] = f_cur[i];
                best.index_axis_mut(Axis(0), i)
                    .assign(&cur.index_axis(Axis(0), i));
            }
        }
        f_prev = f_cur;

        if params.use_schedule && next_ckpt < ckpts.len() && k == ckpts[next_ckpt] {
            let span = if next_ckpt == 0 {
                ckpts[0]
            } else {
                ckpts[next_ckpt] - ckpts[next_ckpt - 1]
            };
            for i in 0..n {
                let cond1 = (improved[i] as f64) < params.rho * last_span as f64;
                let cond2 = eta_at_ckpt[i] == eta[i] && fbest_at_ckpt[i] == f_best[i];
                if cond1 || cond2 {
                    eta[i] /= 2.0;
                    cur.index_axis_mut(Axis(0), i)
                        .assign(&best.index_axis(Axis(0), i));
                }
                improved[i] = 0;
                eta_at_ckpt[i] = eta[i];
                fbest_at_ckpt[i] = f_best[i];
            }
            last_span = span;
            next_ckpt += 1;
        }

        let g = back(&grad_logits(&logits)?);
        if !g.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("apgd gradient".into()));
        }
        let mut z = cur.clone();
        for i in 0..n {
            let step = F::c(eta[i]);
            let gi = g.index_axis(Axis(0), i);
            let mut zi = z.index_axis_mut(Axis(0), i);
            ndarray::Zip::from(&mut zi).and(&gi).for_each(|v, &gv| {
                *v += step * sign(gv);
            });
        }
        let z = project_ball(x, &z, params.eps);
        let next = if k == 0 || params.history_weight == 0.0 {
            z
        } else {
            let hw = F::c(params.history_weight);
            let nw = F::c(1.0 - params.history_weight);
            let cand = ndarray::Zip::from(&cur)
                .and(&z)
                .and(&prev)
                .map_collect(|&c, &zv, &pv| c + nw * (zv - c) + hw * (c - pv));
            project_ball(x, &cand, params.eps)
        };
        prev = cur;
        cur = next;
        if let Some(t) = trace.as_mut() {
            t.push(cur.clone());
        }
    }

    // Score the final iterate too.
    let (logits, _) = model.logits_with_backprop(&cur);
    let f_cur = objective(&logits)?;
    for i in 0..n {
        if f_cur[i] > f_best[i] {
            best.index_axis_mut(Axis(0), i)
                .assign(&cur.index_axis(Axis(0), i));
        }
    }
    Ok(best)
}

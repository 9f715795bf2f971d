//! Single-step and iterated projected gradient-sign attacks.

use ndarray::Array4;
use rand::rngs::StdRng;
use rand::RngExt;

use featsent_nn::loss::ce_grad_logits;
use featsent_nn::{sign, Real};

use crate::error::{Error, Result};

use super::DiffModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgdParams {
    pub eps: f64,
    pub alpha: f64,
    pub iters: usize,
    pub random_start: bool,
}

/// Project onto the l-inf eps-ball around `x0`, intersected with [0, 1].
pub fn project_ball<F: Real>(x0: &Array4<F>, candidate: &Array4<F>, eps: f64) -> Array4<F> {
    let e = F::c(eps);
    let mut out = candidate.clone();
    ndarray::Zip::from(&mut out).and(x0).for_each(|v, &o| {
        let lo = (o - e).max(F::zero());
        let hi = (o + e).min(F::one());
        *v = (*v).max(lo).min(hi);
    });
    out
}

/// Uniform start inside the eps-ball, clipped to the box.
pub fn random_start<F: Real>(x0: &Array4<F>, eps: f64, rng: &mut StdRng) -> Array4<F> {
    let mut out = x0.clone();
    out.mapv_inplace(|v| {
        (v + F::c(rng.random_range(-eps..=eps))).max(F::zero()).min(F::one())
    });
    out
}

fn check_box<F: Real>(x: &Array4<F>) -> Result<()> {
    if !x.iter().all(|v| v.is_finite() && *v >= F::zero() && *v <= F::one()) {
        return Err(Error::NonFinite("attack input not in [0, 1]".into()));
    }
    Ok(())
}

fn grad_step<F: Real>(
    model: &impl DiffModel<F>,
    x: &Array4<F>,
    labels: &[usize],
) -> Result<Array4<F>> {
    let (logits, back) = model.logits_with_backprop(x);
    let g = back(&ce_grad_logits(&logits, labels));
    if !g.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("loss gradient".into()));
    }
    Ok(g)
}

/// One signed gradient step of magnitude eps, clipped to the box.
pub fn fgsm<F: Real>(
    model: &impl DiffModel<F>,
    x: &Array4<F>,
    labels: &[usize],
    eps: f64,
) -> Result<Array4<F>> {
    if eps < 0.0 {
        return Err(Error::InvalidConfig("eps must be non-negative".into()));
    }
    check_box(x)?;
    let g = grad_step(model, x, labels)?;
    let step = F::c(eps);
    let candidate = ndarray::Zip::from(x)
        .and(&g)
        .map_collect(|&xv, &gv| xv + step * sign(gv));
    Ok(project_ball(x, &candidate, eps))
}

pub fn pgd<F: Real>(
    model: &impl DiffModel<F>,
    x: &Array4<F>,
    labels: &[usize],
    params: &PgdParams,
    rng: &mut StdRng,
) -> Result<Array4<F>> {
    pgd_traced(model, x, labels, params, rng, None)
}

/// PGD with an optional per-iterate trace (diagnostics and tests).
pub fn pgd_traced<F: Real>(
    model: &impl DiffModel<F>,
    x: &Array4<F>,
    labels: &[usize],
    params: &PgdParams,
    rng: &mut StdRng,
    mut trace: Option<&mut Vec<Array4<F>>>,
) -> Result<Array4<F>> {
    if params.alpha > params.eps {
        return Err(Error::InvalidConfig(format!(
            "step {} exceeds eps {}",
            params.alpha, params.eps
        )));
    }
    if params.iters == 0 {
        return Err(Error::InvalidConfig("iters must be at least 1".into()));
    }
    check_box(x)?;
    let mut cur = if params.random_start {
        random_start(x, params.eps, rng)
    } else {
        x.clone()
    };
    let step = F::c(params.alpha);
    for _ in 0..params.iters {
        let g = grad_step(model, &cur, labels)?;
        let candidate = ndarray::Zip::from(&cur)
            .and(&g)
            .map_collect(|&xv, &gv| xv + step * sign(gv));
        cur = project_ball(x, &candidate, params.eps);
        if let Some(t) = trace.as_mut() {
            t.push(cur.clone());
        }
    }
    Ok(cur)
}

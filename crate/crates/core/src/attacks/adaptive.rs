//! Detector-aware PGD variants: gradients flow through both the
//! classifier's loss and the detector's loss (via the tapped feature
//! maps), either alternating per step or combined with a weight.

use ndarray::{Array2, Array4};
use rand::rngs::StdRng;

use featsent_nn::loss::ce_grad_logits;
use featsent_nn::{sign, Real};

use crate::analyzer::ADVERSARIAL;
use crate::classifier::Classifier;
use crate::detector::Detector;
use crate::error::{Error, Result};

use super::fgsm_pgd::{project_ball, random_start};

/// Gradients of the classifier loss and of the detector loss (toward
/// reading adversarial inputs as benign) at `x`, from one shared
/// classifier forward pass.
fn dual_grads<F: Real>(
    classifier: &Classifier<F>,
    detector: &Detector<F>,
    x: &Array4<F>,
    labels: &[usize],
    want_classifier: bool,
    want_detector: bool,
) -> Result<(Option<Array4<F>>, Option<Array4<F>>)> {
    let (logits_c, series, cache) = classifier.forward_cached(x, &detector.plan.points, false)?;
    let none_taps: Vec<Option<&Array4<F>>> = vec![None; detector.plan.points.len()];
    let g_c = if want_classifier {
        let d = ce_grad_logits(&logits_c, labels);
        Some(classifier.backward_input(&cache, &d, &detector.plan.points, &none_taps))
    } else {
        None
    };
    let g_d = if want_detector {
        let (logits_d, back_d) = detector.logits_with_map_backprop(&series)?;
        let y_d = vec![ADVERSARIAL; x.dim().0];
        let dmaps = back_d(&ce_grad_logits(&logits_d, &y_d));
        let zero = Array2::zeros(logits_c.raw_dim());
        let tap_grads: Vec<Option<&Array4<F>>> = dmaps.iter().map(Some).collect();
        Some(classifier.backward_input(&cache, &zero, &detector.plan.points, &tap_grads))
    } else {
        None
    };
    for g in [&g_c, &g_d].into_iter().flatten() {
        if !g.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("adaptive attack gradient".into()));
        }
    }
    Ok((g_c, g_d))
}

/// The classifier-loss input gradient (diagnostics and tests).
pub fn classifier_loss_grad<F: Real>(
    classifier: &Classifier<F>,
    detector: &Detector<F>,
    x: &Array4<F>,
    labels: &[usize],
) -> Result<Array4<F>> {
    let (g_c, _) = dual_grads(classifier, detector, x, labels, true, false)?;
    Ok(g_c.expect("classifier gradient requested"))
}

/// Public surface for diagnostics: the detector-loss input gradient.
pub fn detector_loss_grad<F: Real>(
    classifier: &Classifier<F>,
    detector: &Detector<F>,
    x: &Array4<F>,
) -> Result<Array4<F>> {
    let (_, g_d) = dual_grads(classifier, detector, x, &vec![0; x.dim().0], false, true)?;
    Ok(g_d.expect("detector gradient requested"))
}

/// Odd steps climb the classifier loss, even steps climb the detector
/// loss; both projected onto the eps-ball and box.
#[allow(clippy::too_many_arguments)]
pub fn adaptive_alternating<F: Real>(
    classifier: &Classifier<F>,
    detector: &Detector<F>,
    x: &Array4<F>,
    labels: &[usize],
    eps: f64,
    alpha: f64,
    iters: usize,
    with_random_start: bool,
    rng: &mut StdRng,
) -> Result<Array4<F>> {
    if iters == 0 {
        return Err(Error::InvalidConfig("iters must be at least 1".into()));
    }
    let mut cur = if with_random_start {
        random_start(x, eps, rng)
    } else {
        x.clone()
    };
    let step = F::c(alpha);
    for k in 0..iters {
        let classifier_turn = k % 2 == 0;
        let (g_c, g_d) = dual_grads(
            classifier,
            detector,
            &cur,
            labels,
            classifier_turn,
            !classifier_turn,
        )?;
        let g = if classifier_turn {
            g_c.expect("classifier gradient")
        } else {
            g_d.expect("detector gradient")
        };
        let cand = ndarray::Zip::from(&cur)
            .and(&g)
            .map_collect(|&v, &gv| v + step * sign(gv));
        cur = project_ball(x, &cand, eps);
    }
    Ok(cur)
}

/// Weighted combination: step direction
/// (1 - sigma) * sign(grad classifier loss) + sigma * sign(grad detector
/// loss), projected after each step.
#[allow(clippy::too_many_arguments)]
pub fn adaptive_combined<F: Real>(
    classifier: &Classifier<F>,
    detector: &Detector<F>,
    x: &Array4<F>,
    labels: &[usize],
    eps: f64,
    alpha: f64,
    iters: usize,
    sigma: f64,
    with_random_start: bool,
    rng: &mut StdRng,
) -> Result<Array4<F>> {
    if !(0.0..=1.0).contains(&sigma) {
        return Err(Error::InvalidConfig(format!(
            "sigma must be in [0, 1], got {sigma}"
        )));
    }
    if iters == 0 {
        return Err(Error::InvalidConfig("iters must be at least 1".into()));
    }
    let mut cur = if with_random_start {
        random_start(x, eps, rng)
    } else {
        x.clone()
    };
    let step = F::c(alpha);
    let wc = F::c(1.0 - sigma);
    let wd = F::c(sigma);
    for _ in 0..iters {
        let (g_c, g_d) = dual_grads(classifier, detector, &cur, labels, sigma < 1.0, sigma > 0.0)?;
        let zero = Array4::zeros(cur.raw_dim());
        let g_c = g_c.unwrap_or_else(|| zero.clone());
        let g_d = g_d.unwrap_or(zero);
        let cand = ndarray::Zip::from(&cur)
            .and(&g_c)
            .and(&g_d)
            .map_collect(|&v, &gc, &gd| v + step * (wc * sign(gc) + wd * sign(gd)));
        cur = project_ball(x, &cand, eps);
    }
    Ok(cur)
}

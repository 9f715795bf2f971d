//! Gradient-based adversarial example optimizers and the crafted-set
//! container that ties results to the classifier they were made against.

mod adaptive;
mod apgd;
mod cw;
mod deepfool;
mod ead;
mod fgsm_pgd;
mod jsma;

pub use adaptive::{adaptive_alternating, adaptive_combined, classifier_loss_grad, detector_loss_grad};
pub use apgd::{apgd, apgd_traced, dlr_grad_logits, dlr_loss, dlr_per_example, ApgdLoss, ApgdParams};
pub use cw::{binary_search_update, cw_l2, CwOutcome, CwParams};
pub use deepfool::{deepfool, DeepFoolOutcome};
pub use ead::{decision_distance, ead, ead_objective, soft_threshold, DecisionRule, EadOutcome, EadParams};
pub use fgsm_pgd::{fgsm, pgd, pgd_traced, project_ball, random_start, PgdParams};
pub use jsma::{jsma, saliency_map, JsmaOutcome};

use std::path::Path;

use ndarray::{Array2, Array4, Axis};
use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::classifier::{argmax_rows, Classifier};
use crate::detector::Detector;
use crate::error::{Error, Result};
use crate::provenance::{
    derive_seed, read_f32_file, read_i32_file, write_f32_file, write_i32_file, ContentHasher,
};
use featsent_nn::Real;

/// Differentiable model surface the optimizers run against: logits plus
/// a reusable backprop closure from logits-gradients to input-gradients.
pub trait DiffModel<F: Real>: Sync {
    fn num_classes(&self) -> usize;
    fn logits(&self, x: &Array4<F>) -> Array2<F>;
    #[allow(clippy::type_complexity)]
    fn logits_with_backprop<'a>(
        &'a self,
        x: &Array4<F>,
    ) -> (Array2<F>, Box<dyn Fn(&Array2<F>) -> Array4<F> + 'a>);
}

impl<F: Real> DiffModel<F> for Classifier<F> {
    fn num_classes(&self) -> usize {
        Classifier::num_classes(self)
    }

    fn logits(&self, x: &Array4<F>) -> Array2<F> {
        self.forward(x).expect("attack input validated upstream")
    }

    fn logits_with_backprop<'a>(
        &'a self,
        x: &Array4<F>,
    ) -> (Array2<F>, Box<dyn Fn(&Array2<F>) -> Array4<F> + 'a>) {
        let (logits, _, cache) = self
            .forward_cached(x, &[], false)
            .expect("attack input validated upstream");
        let back = move |dlogits: &Array2<F>| self.backward_input(&cache, dlogits, &[], &[]);
        (logits, Box::new(back))
    }
}

/// Linear-softmax model over flattened pixels; the closed-form reference
/// the optimizer oracles are checked against.
#[derive(Debug, Clone)]
pub struct LinearModel<F> {
    /// (classes, pixels)
    pub weights: Array2<F>,
    pub bias: ndarray::Array1<F>,
}

impl<F: Real> LinearModel<F> {
    pub fn new(weights: Array2<F>, bias: ndarray::Array1<F>) -> Self {
        assert_eq!(weights.nrows(), bias.len());
        Self { weights, bias }
    }

    fn flatten(x: &Array4<F>) -> Array2<F> {
        let (n, c, w, h) = x.dim();
        x.clone()
            .into_shape_with_order((n, c * w * h))
            .expect("contiguous")
    }
}

impl<F: Real> DiffModel<F> for LinearModel<F> {
    fn num_classes(&self) -> usize {
        self.weights.nrows()
    }

    fn logits(&self, x: &Array4<F>) -> Array2<F> {
        let flat = Self::flatten(x);
        let mut out = Array2::zeros((flat.nrows(), self.weights.nrows()));
        ndarray::linalg::general_mat_mul(F::one(), &flat, &self.weights.t(), F::zero(), &mut out);
        for mut row in out.outer_iter_mut() {
            row += &self.bias;
        }
        out
    }

    fn logits_with_backprop<'a>(
        &'a self,
        x: &Array4<F>,
    ) -> (Array2<F>, Box<dyn Fn(&Array2<F>) -> Array4<F> + 'a>) {
        let logits = self.logits(x);
        let dim = x.dim();
        let back = move |dlogits: &Array2<F>| {
            let mut flat = Array2::zeros((dlogits.nrows(), self.weights.ncols()));
            ndarray::linalg::general_mat_mul(F::one(), dlogits, &self.weights, F::zero(), &mut flat);
            flat.into_shape_with_order(dim).expect("contiguous")
        };
        (logits, Box::new(back))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Fgsm,
    Pgd,
    Deepfool,
    Jsma,
    Cw,
    Ead,
    ApgdCe,
    ApgdDlr,
    AdaptiveAlt,
    AdaptiveComb,
}

/// Attack hyper-parameters; variants mirror the published defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackParams {
    Fgsm {
        eps: f64,
    },
    Pgd {
        eps: f64,
        #[serde(default = "default_pgd_step")]
        eps_step: f64,
        #[serde(default = "default_pgd_iters")]
        max_iter: usize,
        #[serde(default = "default_true")]
        random_start: bool,
    },
    Deepfool {
        #[serde(default = "default_deepfool_iters")]
        max_iter: usize,
        #[serde(default = "default_overshoot")]
        overshoot: f64,
    },
    Jsma {
        theta: f64,
        gamma: f64,
    },
    Cw {
        #[serde(default = "default_cw_bs")]
        binary_search_steps: usize,
        #[serde(default = "default_cw_steps")]
        steps: usize,
        #[serde(default = "default_cw_stepsize")]
        stepsize: f64,
        #[serde(default = "default_confidence")]
        confidence: f64,
        #[serde(default = "default_initial_const")]
        initial_const: f64,
    },
    Ead {
        #[serde(default = "default_ead_bs")]
        binary_search_steps: usize,
        #[serde(default = "default_cw_steps")]
        steps: usize,
        #[serde(default = "default_confidence")]
        confidence: f64,
        #[serde(default = "default_initial_const")]
        initial_const: f64,
        #[serde(default = "default_regularization")]
        regularization: f64,
        #[serde(default = "default_cw_stepsize")]
        initial_stepsize: f64,
        #[serde(default)]
        decision_rule: DecisionRule,
    },
    ApgdCe {
        eps: f64,
        #[serde(default = "default_apgd_iters")]
        max_iter: usize,
    },
    ApgdDlr {
        eps: f64,
        #[serde(default = "default_apgd_iters")]
        max_iter: usize,
    },
    AdaptiveAlt {
        eps: f64,
        eps_step: f64,
        max_iter: usize,
        #[serde(default = "default_true")]
        random_start: bool,
    },
    AdaptiveComb {
        eps: f64,
        eps_step: f64,
        max_iter: usize,
        sigma: f64,
        #[serde(default = "default_true")]
        random_start: bool,
    },
}

fn default_pgd_step() -> f64 {
    0.002
}
fn default_pgd_iters() -> usize {
    10
}
fn default_true() -> bool {
    true
}
fn default_deepfool_iters() -> usize {
    50
}
fn default_overshoot() -> f64 {
    0.02
}
fn default_cw_bs() -> usize {
    5
}
fn default_cw_steps() -> usize {
    1000
}
fn default_cw_stepsize() -> f64 {
    0.01
}
fn default_confidence() -> f64 {
    0.8
}
fn default_initial_const() -> f64 {
    0.1
}
fn default_ead_bs() -> usize {
    9
}
fn default_regularization() -> f64 {
    0.01
}
fn default_apgd_iters() -> usize {
    100
}

impl AttackParams {
    pub fn kind(&self) -> AttackKind {
        match self {
            AttackParams::Fgsm { .. } => AttackKind::Fgsm,
            AttackParams::Pgd { .. } => AttackKind::Pgd,
            AttackParams::Deepfool { .. } => AttackKind::Deepfool,
            AttackParams::Jsma { .. } => AttackKind::Jsma,
            AttackParams::Cw { .. } => AttackKind::Cw,
            AttackParams::Ead { .. } => AttackKind::Ead,
            AttackParams::ApgdCe { .. } => AttackKind::ApgdCe,
            AttackParams::ApgdDlr { .. } => AttackKind::ApgdDlr,
            AttackParams::AdaptiveAlt { .. } => AttackKind::AdaptiveAlt,
            AttackParams::AdaptiveComb { .. } => AttackKind::AdaptiveComb,
        }
    }

    /// The attack's l-inf budget, when it has one.
    pub fn eps(&self) -> Option<f64> {
        match self {
            AttackParams::Fgsm { eps }
            | AttackParams::Pgd { eps, .. }
            | AttackParams::ApgdCe { eps, .. }
            | AttackParams::ApgdDlr { eps, .. }
            | AttackParams::AdaptiveAlt { eps, .. }
            | AttackParams::AdaptiveComb { eps, .. } => Some(*eps),
            _ => None,
        }
    }

    pub fn needs_detector(&self) -> bool {
        matches!(
            self,
            AttackParams::AdaptiveAlt { .. } | AttackParams::AdaptiveComb { .. }
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        match self {
            AttackParams::Fgsm { eps } => {
                if *eps <= 0.0 {
                    return bad(format!("fgsm eps must be positive, got {eps}"));
                }
            }
            AttackParams::Pgd { eps, eps_step, max_iter, .. }
            | AttackParams::AdaptiveAlt { eps, eps_step, max_iter, .. } => {
                if *eps <= 0.0 || *eps_step <= 0.0 {
                    return bad("pgd eps and eps_step must be positive".into());
                }
                if *eps_step > *eps {
                    return bad(format!("eps_step {eps_step} exceeds eps {eps}"));
                }
                if *max_iter == 0 {
                    return bad("max_iter must be at least 1".into());
                }
            }
            AttackParams::AdaptiveComb { eps, eps_step, max_iter, sigma, .. } => {
                if *eps <= 0.0 || *eps_step <= 0.0 || *eps_step > *eps {
                    return bad("invalid eps/eps_step".into());
                }
                if *max_iter == 0 {
                    return bad("max_iter must be at least 1".into());
                }
                if !(0.0..=1.0).contains(sigma) {
                    return bad(format!("sigma must be in [0, 1], got {sigma}"));
                }
            }
            AttackParams::Deepfool { max_iter, overshoot } => {
                if *max_iter == 0 {
                    return bad("max_iter must be at least 1".into());
                }
                if *overshoot < 0.0 {
                    return bad("overshoot must be non-negative".into());
                }
            }
            AttackParams::Jsma { theta, gamma } => {
                if !(0.0..=1.0).contains(theta) || *theta == 0.0 {
                    return bad(format!("theta must be in (0, 1], got {theta}"));
                }
                if !(0.0..=1.0).contains(gamma) || *gamma == 0.0 {
                    return bad(format!("gamma must be in (0, 1], got {gamma}"));
                }
            }
            AttackParams::Cw { binary_search_steps, steps, stepsize, initial_const, .. } => {
                if *binary_search_steps == 0 || *steps == 0 {
                    return bad("cw steps must be at least 1".into());
                }
                if *stepsize <= 0.0 || *initial_const <= 0.0 {
                    return bad("cw stepsize and initial_const must be positive".into());
                }
            }
            AttackParams::Ead {
                binary_search_steps,
                steps,
                initial_const,
                regularization,
                initial_stepsize,
                ..
            } => {
                if *binary_search_steps == 0 || *steps == 0 {
                    return bad("ead steps must be at least 1".into());
                }
                if *initial_const <= 0.0 || *initial_stepsize <= 0.0 {
                    return bad("ead constants must be positive".into());
                }
                if *regularization < 0.0 {
                    return bad("ead regularization must be non-negative".into());
                }
            }
            AttackParams::ApgdCe { eps, max_iter } | AttackParams::ApgdDlr { eps, max_iter } => {
                if *eps <= 0.0 {
                    return bad("apgd eps must be positive".into());
                }
                if *max_iter < 2 {
                    return bad("apgd needs at least 2 iterations".into());
                }
            }
        }
        Ok(())
    }
}

/// Attack identifier + hyper-parameters + seed: fully determines a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub id: String,
    pub params: AttackParams,
    pub seed: u64,
}

/// Crafted adversarial examples with provenance.
#[derive(Debug, Clone)]
pub struct AdversarialSet<F> {
    pub originals: Array4<F>,
    pub perturbed: Array4<F>,
    pub true_labels: Vec<usize>,
    pub adversarial_predictions: Vec<usize>,
    pub success: Vec<bool>,
    pub spec: AttackSpec,
    pub classifier_hash: String,
}

impl<F: Real> AdversarialSet<F> {
    pub fn len(&self) -> usize {
        self.true_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.true_labels.is_empty()
    }

    pub fn success_count(&self) -> usize {
        self.success.iter().filter(|&&s| s).count()
    }

    pub fn success_rate(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.success_count() as f64 / self.len() as f64
        }
    }

    pub fn success_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.success[i]).collect()
    }

    /// Box and l-inf budget invariants.
    pub fn validate(&self) -> Result<()> {
        if self.perturbed.dim() != self.originals.dim() {
            return Err(Error::ShapeMismatch("perturbed vs originals".into()));
        }
        if !self.perturbed.iter().all(|v| *v >= F::zero() && *v <= F::one()) {
            return Err(Error::InvalidConfig("perturbed values outside [0, 1]".into()));
        }
        if let Some(eps) = self.spec.params.eps() {
            let budget = F::c(eps + 1e-6);
            let max_dev = self
                .perturbed
                .iter()
                .zip(self.originals.iter())
                .map(|(&p, &o)| (p - o).abs())
                .fold(F::zero(), F::max);
            if max_dev > budget {
                return Err(Error::InvalidConfig(format!(
                    "l-inf deviation {max_dev} exceeds eps {eps}"
                )));
            }
        }
        Ok(())
    }

    /// Hash over every payload array, recorded in the manifest so
    /// corrupted caches are rejected on load.
    pub fn content_hash(&self) -> String {
        let mut h = ContentHasher::new();
        h.update_array(&self.originals.view().into_dyn());
        h.update_array(&self.perturbed.view().into_dyn());
        for &l in &self.true_labels {
            h.update_bytes(&(l as u32).to_le_bytes());
        }
        for &p in &self.adversarial_predictions {
            h.update_bytes(&(p as u32).to_le_bytes());
        }
        for &s in &self.success {
            h.update_bytes(&[s as u8]);
        }
        h.finish()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_f32_file(&dir.join("originals.f32"), &self.originals.view().into_dyn())?;
        write_f32_file(&dir.join("perturbed.f32"), &self.perturbed.view().into_dyn())?;
        write_i32_file(
            &dir.join("labels.i32"),
            &self.true_labels.iter().map(|&l| l as i32).collect::<Vec<_>>(),
        )?;
        write_i32_file(
            &dir.join("predictions.i32"),
            &self
                .adversarial_predictions
                .iter()
                .map(|&l| l as i32)
                .collect::<Vec<_>>(),
        )?;
        std::fs::write(
            dir.join("success.u8"),
            self.success.iter().map(|&s| s as u8).collect::<Vec<_>>(),
        )?;
        let manifest = AdvSetManifest {
            spec: self.spec.clone(),
            classifier_hash: self.classifier_hash.clone(),
            shape: {
                let (n, c, w, h) = self.originals.dim();
                vec![n, c, w, h]
            },
            success_count: self.success_count(),
            content_hash: self.content_hash(),
        };
        std::fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<AdversarialSet<F>> {
        let manifest: AdvSetManifest =
            serde_json::from_slice(&std::fs::read(dir.join("manifest.json"))?)?;
        let shape = manifest.shape.clone();
        let originals = read_f32_file::<F>(&dir.join("originals.f32"), &shape)?
            .into_dimensionality()
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let perturbed = read_f32_file::<F>(&dir.join("perturbed.f32"), &shape)?
            .into_dimensionality()
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let true_labels = read_i32_file(&dir.join("labels.i32"))?
            .into_iter()
            .map(|v| v as usize)
            .collect::<Vec<_>>();
        let adversarial_predictions = read_i32_file(&dir.join("predictions.i32"))?
            .into_iter()
            .map(|v| v as usize)
            .collect::<Vec<_>>();
        let success: Vec<bool> = std::fs::read(dir.join("success.u8"))?
            .into_iter()
            .map(|b| b != 0)
            .collect();
        let set = AdversarialSet {
            originals,
            perturbed,
            true_labels,
            adversarial_predictions,
            success,
            spec: manifest.spec,
            classifier_hash: manifest.classifier_hash,
        };
        if set.success_count() != manifest.success_count {
            return Err(Error::Checkpoint("success flags do not match manifest".into()));
        }
        if set.content_hash() != manifest.content_hash {
            return Err(Error::Checkpoint(
                "adversarial set payload does not match its manifest hash".into(),
            ));
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AdvSetManifest {
    spec: AttackSpec,
    classifier_hash: String,
    shape: Vec<usize>,
    success_count: usize,
    content_hash: String,
}

const CRAFT_BATCH: usize = 64;

/// Run an attack over a set of images in seeded batches.
pub fn craft_dataset<F: Real>(
    classifier: &Classifier<F>,
    spec: &AttackSpec,
    images: &Array4<F>,
    labels: &[usize],
    detector: Option<&Detector<F>>,
) -> Result<AdversarialSet<F>> {
    spec.params.validate()?;
    let n = images.dim().0;
    if n == 0 {
        return Err(Error::Empty("attack input".into()));
    }
    if labels.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{n} images vs {} labels",
            labels.len()
        )));
    }
    if spec.params.needs_detector() && detector.is_none() {
        return Err(Error::InvalidConfig(format!(
            "attack `{}` needs a detector",
            spec.id
        )));
    }
    if !images.iter().all(|v| v.is_finite() && *v >= F::zero() && *v <= F::one()) {
        return Err(Error::NonFinite("attack input not in [0, 1]".into()));
    }

    let mut perturbed = Array4::zeros(images.raw_dim());
    let idx: Vec<usize> = (0..n).collect();
    for (bi, chunk) in idx.chunks(CRAFT_BATCH).enumerate() {
        let mut rng = StdRng::seed_from_u64(derive_seed(spec.seed, &format!("attack-batch-{bi}")));
        let batch = crate::classifier::gather(images, chunk);
        let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
        let adv = run_attack(classifier, spec, &batch, &batch_labels, detector, &mut rng, bi)?;
        for (row, &i) in chunk.iter().enumerate() {
            perturbed
                .index_axis_mut(Axis(0), i)
                .assign(&adv.index_axis(Axis(0), row));
        }
    }

    let mut predictions = Vec::with_capacity(n);
    for chunk in idx.chunks(CRAFT_BATCH) {
        let batch = crate::classifier::gather(&perturbed, chunk);
        predictions.extend(argmax_rows(&classifier.forward(&batch)?));
    }
    let success: Vec<bool> = predictions
        .iter()
        .zip(labels.iter())
        .map(|(p, l)| p != l)
        .collect();
    let set = AdversarialSet {
        originals: images.clone(),
        perturbed,
        true_labels: labels.to_vec(),
        adversarial_predictions: predictions,
        success,
        spec: spec.clone(),
        classifier_hash: classifier.state_hash(),
    };
    set.validate()?;
    Ok(set)
}

/// Second-most-likely class per example, the default target convention.
pub fn default_targets<F: Real>(model: &impl DiffModel<F>, x: &Array4<F>) -> Vec<usize> {
    let logits = model.logits(x);
    logits
        .outer_iter()
        .map(|row| {
            let mut order: Vec<usize> = (0..row.len()).collect();
            order.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap_or(std::cmp::Ordering::Equal));
            order[1]
        })
        .collect()
}

fn run_attack<F: Real>(
    classifier: &Classifier<F>,
    spec: &AttackSpec,
    batch: &Array4<F>,
    labels: &[usize],
    detector: Option<&Detector<F>>,
    rng: &mut StdRng,
    batch_index: usize,
) -> Result<Array4<F>> {
    match &spec.params {
        AttackParams::Fgsm { eps } => fgsm(classifier, batch, labels, *eps),
        AttackParams::Pgd { eps, eps_step, max_iter, random_start } => pgd(
            classifier,
            batch,
            labels,
            &PgdParams {
                eps: *eps,
                alpha: *eps_step,
                iters: *max_iter,
                random_start: *random_start,
            },
            rng,
        ),
        AttackParams::Deepfool { max_iter, overshoot } => {
            let outcomes = deepfool(classifier, batch, labels, *max_iter, *overshoot)?;
            Ok(stack_outcomes(batch, outcomes.into_iter().map(|o| o.x_adv)))
        }
        AttackParams::Jsma { theta, gamma } => {
            let targets = default_targets(classifier, batch);
            let outcomes = jsma(classifier, batch, &targets, *theta, *gamma)?;
            Ok(stack_outcomes(batch, outcomes.into_iter().map(|o| o.x_adv)))
        }
        AttackParams::Cw {
            binary_search_steps,
            steps,
            stepsize,
            confidence,
            initial_const,
        } => {
            let targets = default_targets(classifier, batch);
            let params = CwParams {
                binary_search_steps: *binary_search_steps,
                steps: *steps,
                stepsize: *stepsize,
                confidence: *confidence,
                initial_const: *initial_const,
            };
            let outcomes = cw_l2(classifier, batch, &targets, &params)?;
            Ok(stack_outcomes(batch, outcomes.into_iter().map(|o| o.x_adv)))
        }
        AttackParams::Ead {
            binary_search_steps,
            steps,
            confidence,
            initial_const,
            regularization,
            initial_stepsize,
            decision_rule,
        } => {
            let targets = default_targets(classifier, batch);
            let params = EadParams {
                binary_search_steps: *binary_search_steps,
                steps: *steps,
                confidence: *confidence,
                initial_const: *initial_const,
                beta: *regularization,
                initial_stepsize: *initial_stepsize,
                decision_rule: *decision_rule,
            };
            let outcomes = ead(classifier, batch, &targets, &params)?;
            Ok(stack_outcomes(batch, outcomes.into_iter().map(|o| o.x_adv)))
        }
        AttackParams::ApgdCe { eps, max_iter } => apgd(
            classifier,
            batch,
            labels,
            &ApgdParams::new(*eps, *max_iter, ApgdLoss::Ce),
            rng,
        ),
        AttackParams::ApgdDlr { eps, max_iter } => apgd(
            classifier,
            batch,
            labels,
            &ApgdParams::new(*eps, *max_iter, ApgdLoss::Dlr),
            rng,
        ),
        AttackParams::AdaptiveAlt { eps, eps_step, max_iter, random_start } => {
            adaptive_alternating(
                classifier,
                detector.expect("checked above"),
                batch,
                labels,
                *eps,
                *eps_step,
                *max_iter,
                *random_start,
                rng,
            )
        }
        AttackParams::AdaptiveComb { eps, eps_step, max_iter, sigma, random_start } => {
            adaptive_combined(
                classifier,
                detector.expect("checked above"),
                batch,
                labels,
                *eps,
                *eps_step,
                *max_iter,
                *sigma,
                *random_start,
                rng,
            )
        }
    }
    .map_err(|e| match e {
        Error::NonFinite(what) => Error::NonFinite(format!("{what} (batch {batch_index})")),
        other => other,
    })
}

fn stack_outcomes<F: Real>(batch: &Array4<F>, rows: impl Iterator<Item = Array4<F>>) -> Array4<F> {
    let mut out = Array4::zeros(batch.raw_dim());
    for (i, row) in rows.enumerate() {
        out.index_axis_mut(Axis(0), i)
            .assign(&row.index_axis(Axis(0), 0));
    }
    out
}

//! Detector training: balanced benign/adversarial datasets assembled
//! with provenance checks, cross-entropy optimization of the embedding
//! and analyzer parameters, and fine-tuning on fresh attacks.

use ndarray::{Array2, Array4, Axis};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use featsent_nn::loss::softmax;
use featsent_nn::{Adam, Real};

use crate::analyzer::{SentimentAnalyzer, ADVERSARIAL, BENIGN};
use crate::attacks::AdversarialSet;
use crate::classifier::{gather, Classifier, FeatureSeries};
use crate::detector::Detector;
use crate::embedding::EmbeddingLayer;
use crate::error::{Error, Result};
use crate::eval::roc_auc;
use crate::provenance::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Val,
}

/// Labeled images feeding detector training; features are recomputed
/// from the classifier (or cached once per training run).
#[derive(Debug, Clone)]
pub struct DetectorDataset<F> {
    pub images: Array4<F>,
    pub labels: Vec<usize>,
    pub splits: Vec<Split>,
    pub class_weights: (f64, f64),
    pub classifier_hash: String,
    pub source_attack: String,
}

impl<F: Real> DetectorDataset<F> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn split_indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainRecipe {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub cache_features: bool,
    pub val_fraction: f64,
}

impl TrainRecipe {
    pub fn new(seed: u64) -> Self {
        Self {
            epochs: 10,
            lr: 1e-4,
            batch_size: 128,
            seed,
            cache_features: true,
            val_fraction: 0.02,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.lr <= 0.0 {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectorEpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auc: f64,
    pub wall_ms: f64,
}

pub type TrainHistory = Vec<DetectorEpochStats>;

/// Pair benign images with successful adversarial examples. Benign
/// examples come from correctly-classified images; with `balance` on,
/// the majority side is downsampled (benign first) to a 1:1 ratio.
pub fn assemble<F: Real>(
    classifier: &Classifier<F>,
    benign_images: &Array4<F>,
    benign_labels: &[usize],
    adv: &AdversarialSet<F>,
    balance: bool,
    val_fraction: f64,
) -> Result<DetectorDataset<F>> {
    let classifier_hash = classifier.state_hash();
    if adv.classifier_hash != classifier_hash {
        return Err(Error::Provenance(format!(
            "adversarial set was crafted against classifier {}, not {}",
            adv.classifier_hash, classifier_hash
        )));
    }
    let adv_idx = adv.success_indices();
    if adv_idx.is_empty() {
        return Err(Error::Empty("no successful adversarial examples".into()));
    }
    // Keep only correctly classified benign images.
    let preds = classifier.predict(benign_images)?;
    let mut benign_idx: Vec<usize> = preds
        .iter()
        .zip(benign_labels.iter())
        .enumerate()
        .filter_map(|(i, (p, l))| (p == l).then_some(i))
        .collect();
    if benign_idx.is_empty() {
        return Err(Error::Empty("no correctly-classified benign images".into()));
    }
    let mut adv_keep = adv_idx;
    if balance {
        if benign_idx.len() > adv_keep.len() {
            benign_idx.truncate(adv_keep.len());
        } else {
            adv_keep.truncate(benign_idx.len());
        }
    }
    let n_benign = benign_idx.len();
    let n_adv = adv_keep.len();
    let (_, c, w, h) = benign_images.dim();
    let mut images = Array4::zeros((n_benign + n_adv, c, w, h));
    let mut labels = Vec::with_capacity(n_benign + n_adv);
    for (row, &i) in benign_idx.iter().enumerate() {
        images
            .index_axis_mut(Axis(0), row)
            .assign(&benign_images.index_axis(Axis(0), i));
        labels.push(BENIGN);
    }
    for (row, &i) in adv_keep.iter().enumerate() {
        images
            .index_axis_mut(Axis(0), n_benign + row)
            .assign(&adv.perturbed.index_axis(Axis(0), i));
        labels.push(ADVERSARIAL);
    }
    // Stratified every-k-th assignment to the validation split.
    let stride = if val_fraction > 0.0 {
        (1.0 / val_fraction).round().max(2.0) as usize
    } else {
        usize::MAX
    };
    let mut splits = vec![Split::Train; labels.len()];
    for (count, split) in splits.iter_mut().enumerate() {
        if stride != usize::MAX && count % stride == stride - 1 {
            *split = Split::Val;
        }
    }
    let total = labels.len() as f64;
    let class_weights = if balance {
        (1.0, 1.0)
    } else {
        (
            total / (2.0 * n_benign as f64),
            total / (2.0 * n_adv as f64),
        )
    };
    Ok(DetectorDataset {
        images,
        labels,
        splits,
        class_weights,
        classifier_hash,
        source_attack: adv.spec.id.clone(),
    })
}

/// Weighted cross-entropy over two classes; weights default to 1.
fn weighted_ce<F: Real>(
    logits: &Array2<F>,
    labels: &[usize],
    weights: (f64, f64),
) -> (F, Array2<F>) {
    let n = labels.len();
    let p = softmax(logits);
    let mut loss = F::zero();
    let mut dlogits = Array2::zeros(logits.raw_dim());
    let inv_n = F::c(1.0 / n as f64);
    for (i, &y) in labels.iter().enumerate() {
        let wy = F::c(if y == BENIGN { weights.0 } else { weights.1 });
        loss += -(p[[i, y]].max(F::c(1e-30))).ln() * wy;
        for j in 0..logits.ncols() {
            let delta = if j == y { F::one() } else { F::zero() };
            dlogits[[i, j]] = wy * (p[[i, j]] - delta) * inv_n;
        }
    }
    (loss * inv_n, dlogits)
}

/// Extract (and optionally cache) feature series for every example.
struct FeaturePipe<'a, F: Real> {
    classifier: &'a Classifier<F>,
    detector_plan: crate::classifier::TapPlan,
    cache: Option<Vec<Array4<F>>>,
}

impl<'a, F: Real> FeaturePipe<'a, F> {
    fn new(
        classifier: &'a Classifier<F>,
        detector_plan: crate::classifier::TapPlan,
        images: &Array4<F>,
        cache_features: bool,
        batch: usize,
    ) -> Result<Self> {
        let cache = if cache_features {
            let n = images.dim().0;
            let mut maps: Vec<Array4<F>> = detector_plan
                .dims
                .iter()
                .map(|&(c, w, h)| Array4::zeros((n, c, w, h)))
                .collect();
            let idx: Vec<usize> = (0..n).collect();
            for chunk in idx.chunks(batch) {
                let imgs = gather(images, chunk);
                let (_, series) = classifier.forward_with_taps(&imgs, &detector_plan)?;
                for (l, map) in series.maps.iter().enumerate() {
                    for (row, &i) in chunk.iter().enumerate() {
                        maps[l]
                            .index_axis_mut(Axis(0), i)
                            .assign(&map.index_axis(Axis(0), row));
                    }
                }
            }
            Some(maps)
        } else {
            None
        };
        Ok(Self {
            classifier,
            detector_plan,
            cache,
        })
    }

    fn series_for(&self, images: &Array4<F>, idx: &[usize]) -> Result<FeatureSeries<F>> {
        match &self.cache {
            Some(maps) => Ok(FeatureSeries {
                maps: maps
                    .iter()
                    .map(|m| {
                        let (_, c, w, h) = m.dim();
                        let mut out = Array4::zeros((idx.len(), c, w, h));
                        for (row, &i) in idx.iter().enumerate() {
                            out.index_axis_mut(Axis(0), row)
                                .assign(&m.index_axis(Axis(0), i));
                        }
                        out
                    })
                    .collect(),
            }),
            None => {
                let imgs = gather(images, idx);
                Ok(self
                    .classifier
                    .forward_with_taps(&imgs, &self.detector_plan)?
                    .1)
            }
        }
    }
}

/// Train the detector on an assembled dataset; the classifier is frozen.
pub fn train<F: Real>(
    detector: &mut Detector<F>,
    classifier: &Classifier<F>,
    ds: &DetectorDataset<F>,
    recipe: &TrainRecipe,
) -> Result<TrainHistory> {
    recipe.validate()?;
    if ds.is_empty() {
        return Err(Error::Empty("detector dataset".into()));
    }
    if ds.classifier_hash != classifier.state_hash() {
        return Err(Error::Provenance("dataset classifier hash mismatch".into()));
    }
    let train_idx = ds.split_indices(Split::Train);
    let val_idx = ds.split_indices(Split::Val);
    let has = |idx: &[usize], class: usize| idx.iter().any(|&i| ds.labels[i] == class);
    if !has(&train_idx, BENIGN) || !has(&train_idx, ADVERSARIAL) {
        return Err(Error::InvalidConfig(
            "training split needs both benign and adversarial examples".into(),
        ));
    }

    let pipe = FeaturePipe::new(classifier, detector.plan.clone(), &ds.images, recipe.cache_features, recipe.batch_size)?;
    let mut opt = Adam::new(F::c(recipe.lr));
    let mut history = Vec::with_capacity(recipe.epochs);
    let mut order = train_idx.clone();
    let epoch_base = detector.meta.epochs_trained;
    for epoch in 0..recipe.epochs {
        let started = std::time::Instant::now();
        let mut rng = StdRng::seed_from_u64(derive_seed(
            recipe.seed,
            &format!("detector-epoch-{}", epoch_base + epoch),
        ));
        order.shuffle(&mut rng);
        let mut dropout_rng = StdRng::seed_from_u64(derive_seed(
            recipe.seed,
            &format!("detector-dropout-{}", epoch_base + epoch),
        ));
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(recipe.batch_size) {
            let series = pipe.series_for(&ds.images, chunk)?;
            let labels: Vec<usize> = chunk.iter().map(|&i| ds.labels[i]).collect();
            let (sentence, emb_cache) = detector.embedding.embed_cached(&series, true)?;
            let (logits, an_cache) =
                detector
                    .analyzer
                    .forward_cached(&sentence, false, Some(&mut dropout_rng))?;
            let (loss, dlogits) = weighted_ce(&logits, &labels, ds.class_weights);
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite detector loss at epoch {epoch} after {seen} examples"
                )));
            }
            let mut emb_grads = detector.embedding.zero_grads();
            let mut an_grads = detector.analyzer.zero_grads();
            let dsent = detector
                .analyzer
                .backward(&an_cache, &dlogits, Some(&mut an_grads), true)
                .expect("sentence gradient requested");
            detector
                .embedding
                .backward(&emb_cache, &dsent, Some(&mut emb_grads), false);
            let mut grad_views = EmbeddingLayer::grad_views(&emb_grads);
            grad_views.extend(SentimentAnalyzer::grad_views(&an_grads));
            opt.step(detector.param_views_mut(), &grad_views);
            loss_sum += loss.as_f64() * chunk.len() as f64;
            seen += chunk.len();
        }
        let val_auc = if val_idx.is_empty() {
            f64::NAN
        } else {
            let series = pipe.series_for(&ds.images, &val_idx)?;
            let scores = detector.p_adversarial(&series)?;
            let labels: Vec<bool> = val_idx.iter().map(|&i| ds.labels[i] == ADVERSARIAL).collect();
            roc_auc(
                &scores.iter().map(|v| v.as_f64()).collect::<Vec<_>>(),
                &labels,
            )
            .unwrap_or(f64::NAN)
        };
        history.push(DetectorEpochStats {
            epoch: epoch_base + epoch,
            train_loss: loss_sum / seen as f64,
            val_auc,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
    }
    detector.meta.epochs_trained += recipe.epochs;
    detector.meta.classifier_hash = Some(ds.classifier_hash.clone());
    if detector.meta.trained_against.is_none() {
        detector.meta.trained_against = Some(ds.source_attack.clone());
    }
    if !detector.meta.lineage.contains(&ds.source_attack) {
        detector.meta.lineage.push(ds.source_attack.clone());
    }
    Ok(history)
}

/// Continue optimization on newly-crafted examples without
/// re-initializing; lineage is appended.
pub fn fine_tune<F: Real>(
    detector: &mut Detector<F>,
    classifier: &Classifier<F>,
    new_adv: &AdversarialSet<F>,
    benign_images: &Array4<F>,
    benign_labels: &[usize],
    epochs: usize,
    recipe: &TrainRecipe,
) -> Result<TrainHistory> {
    if detector.meta.epochs_trained == 0 {
        return Err(Error::InvalidConfig(
            "fine-tune requires a previously trained detector".into(),
        ));
    }
    if new_adv.is_empty() || new_adv.success_count() == 0 {
        return Err(Error::Empty("no new adversarial examples".into()));
    }
    let ds = assemble(classifier, benign_images, benign_labels, new_adv, true, recipe.val_fraction)?;
    let recipe = TrainRecipe {
        epochs,
        ..recipe.clone()
    };
    train(detector, classifier, &ds, &recipe)
}

/// Detection accuracy at the 0.5 threshold over a feature series.
pub fn detection_accuracy<F: Real>(
    detector: &Detector<F>,
    series: &FeatureSeries<F>,
    is_adversarial: &[bool],
) -> Result<f64> {
    let scores = detector.p_adversarial(series)?;
    let correct = scores
        .iter()
        .zip(is_adversarial.iter())
        .filter(|(s, &adv)| (s.as_f64() > 0.5) == adv)
        .count();
    Ok(correct as f64 / is_adversarial.len() as f64)
}

/// Classifier prediction agreement helper used when assembling balanced
/// evaluation sets.
pub fn correctly_classified<F: Real>(
    classifier: &Classifier<F>,
    images: &Array4<F>,
    labels: &[usize],
) -> Result<Vec<usize>> {
    let preds = classifier.predict(images)?;
    Ok(preds
        .iter()
        .zip(labels.iter())
        .enumerate()
        .filter_map(|(i, (p, l))| (p == l).then_some(i))
        .collect())
}

//! Detection metrics, generalization matrices, runtime measurement,
//! separability diagnostics, and word-vector export.

mod bhattacharyya;
mod export;

pub use bhattacharyya::bhattacharyya_gaussian;
pub use export::{export_words, load_words, WordExport};

use std::collections::BTreeMap;
use std::time::Instant;

use ndarray::{Array2, Array4, Axis};
use serde::{Deserialize, Serialize};

use featsent_nn::Real;

use crate::attacks::AdversarialSet;
use crate::classifier::{gather, Classifier};
use crate::detector::Detector;
use crate::embedding::raw_words;
use crate::error::{Error, Result};

/// Probability that a random positive outscores a random negative, ties
/// counted half (rank formulation; identical to pairwise counting).
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidConfig(
            "roc_auc needs both classes present".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(std::cmp::Ordering::Equal));
    // Average ranks over tie runs (1-based).
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0usize;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc: f64,
    pub detection_accuracy: f64,
    pub attack_success_rate: f64,
    /// End-to-end single-example latency including the tap-capturing
    /// classifier forward.
    pub mean_latency_ms: f64,
    /// Detector-only latency (embedding + analyzer).
    pub detector_only_latency_ms: f64,
    pub n_examples: usize,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub attack_id: String,
}

/// Balanced benign/adversarial evaluation inputs: correctly-classified
/// benign images vs successful adversarial examples, majority side
/// truncated.
fn balanced_eval_sets<F: Real>(
    classifier: &Classifier<F>,
    benign_images: &Array4<F>,
    benign_labels: &[usize],
    adv: &AdversarialSet<F>,
) -> Result<(Array4<F>, Array4<F>)> {
    let mut benign_idx = crate::trainer::correctly_classified(classifier, benign_images, benign_labels)?;
    let mut adv_idx = adv.success_indices();
    if benign_idx.is_empty() || adv_idx.is_empty() {
        return Err(Error::Empty(
            "balanced evaluation needs both benign and adversarial examples".into(),
        ));
    }
    let k = benign_idx.len().min(adv_idx.len());
    benign_idx.truncate(k);
    adv_idx.truncate(k);
    Ok((gather(benign_images, &benign_idx), gather(&adv.perturbed, &adv_idx)))
}

/// Scores for a balanced set: benign first, adversarial second; shared
/// by single evaluation and the generalization matrix so the two paths
/// agree exactly.
fn balanced_scores<F: Real>(
    detector: &Detector<F>,
    classifier: &Classifier<F>,
    benign: &Array4<F>,
    adversarial: &Array4<F>,
) -> Result<(Vec<f64>, Vec<bool>)> {
    let mut scores = Vec::with_capacity(benign.dim().0 + adversarial.dim().0);
    let mut labels = Vec::with_capacity(scores.capacity());
    for (images, is_adv) in [(benign, false), (adversarial, true)] {
        let idx: Vec<usize> = (0..images.dim().0).collect();
        for chunk in idx.chunks(256) {
            let batch = gather(images, chunk);
            let (_, series) = classifier.forward_with_taps(&batch, &detector.plan)?;
            let p = detector.p_adversarial(&series)?;
            scores.extend(p.iter().map(|v| v.as_f64()));
            labels.extend(std::iter::repeat(is_adv).take(chunk.len()));
        }
    }
    Ok((scores, labels))
}

fn provenance_check<F: Real>(
    detector: &Detector<F>,
    classifier: &Classifier<F>,
    adv: &AdversarialSet<F>,
) -> Result<()> {
    let hash = classifier.state_hash();
    if adv.classifier_hash != hash {
        return Err(Error::Provenance(format!(
            "adversarial set hash {} != classifier {}",
            adv.classifier_hash, hash
        )));
    }
    if let Some(dh) = &detector.meta.classifier_hash {
        if dh != &hash {
            return Err(Error::Provenance(format!(
                "detector was trained against classifier {dh}, not {hash}"
            )));
        }
    }
    Ok(())
}

pub fn evaluate_detector<F: Real>(
    detector: &Detector<F>,
    classifier: &Classifier<F>,
    benign_images: &Array4<F>,
    benign_labels: &[usize],
    adv: &AdversarialSet<F>,
    config_hash: &str,
    latency_calls: usize,
) -> Result<EvalReport> {
    provenance_check(detector, classifier, adv)?;
    let (benign, adversarial) = balanced_eval_sets(classifier, benign_images, benign_labels, adv)?;
    let (scores, labels) = balanced_scores(detector, classifier, &benign, &adversarial)?;
    let auc = roc_auc(&scores, &labels)?;
    let correct = scores
        .iter()
        .zip(labels.iter())
        .filter(|(s, &l)| (**s > 0.5) == l)
        .count();
    let detection_accuracy = correct as f64 / labels.len() as f64;

    // Latency over single-example detect calls, cycling the balanced set.
    let calls = latency_calls.max(100);
    let mut total = 0.0f64;
    let mut detector_only = 0.0f64;
    for i in 0..calls {
        let src = if i % 2 == 0 { &benign } else { &adversarial };
        let row = (i / 2) % src.dim().0;
        let img = src.index_axis(Axis(0), row).to_owned().insert_axis(Axis(0));
        let start = Instant::now();
        let (_, series) = classifier.forward_with_taps(&img, &detector.plan)?;
        let mid = Instant::now();
        let _ = detector.detect(&series)?;
        let end = Instant::now();
        total += (end - start).as_secs_f64() * 1e3;
        detector_only += (end - mid).as_secs_f64() * 1e3;
    }
    Ok(EvalReport {
        auc,
        detection_accuracy,
        attack_success_rate: adv.success_rate(),
        mean_latency_ms: total / calls as f64,
        detector_only_latency_ms: detector_only / calls as f64,
        n_examples: labels.len(),
        config_hash: config_hash.to_string(),
        seeds: vec![adv.spec.seed, detector.meta.seed],
        attack_id: adv.spec.id.clone(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneralizationMatrix {
    pub train_attacks: Vec<String>,
    pub test_attacks: Vec<String>,
    pub auc: Vec<Vec<f64>>,
    pub row_avg: Vec<f64>,
}

/// AUC of every detector on every crafted set; entry (i, j) is
/// detectors[i] scored on sets[j].
pub fn generalization_matrix<F: Real>(
    detectors: &BTreeMap<String, Detector<F>>,
    sets: &BTreeMap<String, AdversarialSet<F>>,
    classifier: &Classifier<F>,
    benign_images: &Array4<F>,
    benign_labels: &[usize],
) -> Result<GeneralizationMatrix> {
    if detectors.is_empty() || sets.is_empty() {
        return Err(Error::Empty("generalization needs detectors and sets".into()));
    }
    let train_attacks: Vec<String> = detectors.keys().cloned().collect();
    let test_attacks: Vec<String> = sets.keys().cloned().collect();
    let mut auc = Vec::with_capacity(train_attacks.len());
    let mut row_avg = Vec::with_capacity(train_attacks.len());
    for train in &train_attacks {
        let detector = &detectors[train];
        let mut row = Vec::with_capacity(test_attacks.len());
        for test in &test_attacks {
            let adv = &sets[test];
            provenance_check(detector, classifier, adv)?;
            let (benign, adversarial) =
                balanced_eval_sets(classifier, benign_images, benign_labels, adv)?;
            let (scores, labels) = balanced_scores(detector, classifier, &benign, &adversarial)?;
            row.push(roc_auc(&scores, &labels)?);
        }
        row_avg.push(row.iter().sum::<f64>() / row.len() as f64);
        auc.push(row);
    }
    Ok(GeneralizationMatrix {
        train_attacks,
        test_attacks,
        auc,
        row_avg,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeparabilityReport {
    pub taps: Vec<String>,
    /// Distances between benign and adversarial words computed on raw
    /// (globally average-pooled) classifier feature maps.
    pub classifier_side: Vec<f64>,
    /// Same, on the detector's embedded words.
    pub detector_side: Vec<f64>,
}

/// Per-tap Bhattacharyya distances between benign and adversarial word
/// populations, on raw classifier words and on detector-embedded words.
pub fn separability_report<F: Real>(
    classifier: &Classifier<F>,
    detector: &Detector<F>,
    benign_images: &Array4<F>,
    adv: &AdversarialSet<F>,
) -> Result<SeparabilityReport> {
    let l = detector.plan.len();
    let collect = |images: &Array4<F>| -> Result<(Vec<Array2<F>>, Vec<Array2<F>>)> {
        let mut raw: Vec<Array2<F>> = Vec::with_capacity(l);
        let mut embedded: Vec<Array2<F>> = Vec::with_capacity(l);
        let idx: Vec<usize> = (0..images.dim().0).collect();
        let mut raw_parts: Vec<Vec<Array2<F>>> = vec![Vec::new(); l];
        let mut emb_parts: Vec<Vec<Array2<F>>> = vec![Vec::new(); l];
        for chunk in idx.chunks(256) {
            let batch = gather(images, chunk);
            let (_, series) = classifier.forward_with_taps(&batch, &detector.plan)?;
            let sentence = detector.sentence(&series)?;
            for li in 0..l {
                raw_parts[li].push(raw_words(&series.maps[li]));
                emb_parts[li].push(sentence.words.index_axis(Axis(1), li).to_owned());
            }
        }
        for li in 0..l {
            raw.push(vstack(&raw_parts[li]));
            embedded.push(vstack(&emb_parts[li]));
        }
        Ok((raw, embedded))
    };
    let (benign_raw, benign_emb) = collect(benign_images)?;
    let (adv_raw, adv_emb) = collect(&adv.perturbed)?;
    let mut classifier_side = Vec::with_capacity(l);
    let mut detector_side = Vec::with_capacity(l);
    for li in 0..l {
        classifier_side.push(bhattacharyya_gaussian(&benign_raw[li], &adv_raw[li])?.as_f64());
        detector_side.push(bhattacharyya_gaussian(&benign_emb[li], &adv_emb[li])?.as_f64());
    }
    Ok(SeparabilityReport {
        taps: detector.plan.layer_ids.clone(),
        classifier_side,
        detector_side,
    })
}

fn vstack<F: Real>(parts: &[Array2<F>]) -> Array2<F> {
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    ndarray::concatenate(Axis(0), &views).expect("consistent widths")
}

//! Classifier training with adaptive-moment gradient descent.

use ndarray::Array4;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::provenance::derive_seed;
use featsent_nn::loss::cross_entropy;
use featsent_nn::{Adam, Real};

use super::{argmax_rows, Classifier};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub wall_ms: f64,
}

/// Train in place; returns per-epoch loss and validation accuracy.
#[allow(clippy::too_many_arguments)]
pub fn train_classifier<F: Real>(
    classifier: &mut Classifier<F>,
    train_images: &Array4<F>,
    train_labels: &[usize],
    val_images: &Array4<F>,
    val_labels: &[usize],
    epochs: usize,
    lr: f64,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<EpochStats>> {
    let n = train_images.dim().0;
    if n == 0 {
        return Err(Error::Empty("training set".into()));
    }
    if epochs == 0 {
        return Err(Error::InvalidConfig("epochs must be at least 1".into()));
    }
    if train_labels.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{n} images vs {} labels",
            train_labels.len()
        )));
    }
    let classes = classifier.num_classes();
    if let Some(&bad) = train_labels.iter().chain(val_labels).find(|&&l| l >= classes) {
        return Err(Error::InvalidConfig(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }

    let mut opt = Adam::new(F::c(lr));
    let mut history = Vec::with_capacity(epochs);
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..epochs {
        let started = std::time::Instant::now();
        let mut rng = StdRng::seed_from_u64(derive_seed(seed, &format!("classifier-epoch-{epoch}")));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(batch_size.max(1)) {
            let batch = gather(train_images, chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| train_labels[i]).collect();
            let (logits, cache) = classifier.train_forward(&batch);
            let (loss, dlogits) = cross_entropy(&logits, &labels);
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite loss at epoch {epoch} after {seen} examples"
                )));
            }
            let mut grads = classifier.zero_grads();
            classifier.train_backward(&cache, &dlogits, &mut grads);
            let grad_views = classifier.grad_views(&grads);
            opt.step(classifier.param_views_mut(), &grad_views);
            loss_sum += loss.as_f64() * chunk.len() as f64;
            seen += chunk.len();
        }
        let val_accuracy = accuracy(classifier, val_images, val_labels, batch_size)?;
        history.push(EpochStats {
            epoch,
            train_loss: loss_sum / seen as f64,
            val_accuracy,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok(history)
}

pub fn accuracy<F: Real>(
    classifier: &Classifier<F>,
    images: &Array4<F>,
    labels: &[usize],
    batch_size: usize,
) -> Result<f64> {
    let n = images.dim().0;
    if n == 0 {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    let idx: Vec<usize> = (0..n).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let batch = gather(images, chunk);
        let logits = classifier.forward(&batch)?;
        for (row, &i) in argmax_rows(&logits).iter().zip(chunk.iter()) {
            if *row == labels[i] {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / n as f64)
}

/// Copy selected rows into a contiguous batch.
pub fn gather<F: Real>(images: &Array4<F>, idx: &[usize]) -> Array4<F> {
    let (_, c, w, h) = images.dim();
    let mut out = Array4::zeros((idx.len(), c, w, h));
    for (row, &i) in idx.iter().enumerate() {
        out.index_axis_mut(ndarray::Axis(0), row)
            .assign(&images.index_axis(ndarray::Axis(0), i));
    }
    out
}

//! Softmax and cross-entropy on logits.

use ndarray::{Array1, Array2};

use crate::scalar::Real;

/// Row-wise softmax with max subtraction.
pub fn softmax<F: Real>(logits: &Array2<F>) -> Array2<F> {
    let mut p = logits.clone();
    for mut row in p.outer_iter_mut() {
        let m = row.iter().cloned().fold(F::neg_infinity(), F::max);
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    p
}

/// Per-example cross-entropy of the true class.
pub fn ce_per_example<F: Real>(logits: &Array2<F>, labels: &[usize]) -> Array1<F> {
    let p = softmax(logits);
    let mut out = Array1::zeros(labels.len());
    for (i, &y) in labels.iter().enumerate() {
        out[i] = -(p[[i, y]].max(F::c(1e-30))).ln();
    }
    out
}

/// Mean cross-entropy and its gradient on the logits.
pub fn cross_entropy<F: Real>(logits: &Array2<F>, labels: &[usize]) -> (F, Array2<F>) {
    let n = labels.len();
    assert_eq!(logits.nrows(), n, "logits/labels length");
    let p = softmax(logits);
    let mut loss = F::zero();
    let mut dlogits = p.clone();
    let inv_n = F::c(1.0 / n as f64);
    for (i, &y) in labels.iter().enumerate() {
        assert!(y < logits.ncols(), "label {y} out of range");
        loss += -(p[[i, y]].max(F::c(1e-30))).ln();
        dlogits[[i, y]] -= F::one();
    }
    dlogits.mapv_inplace(|v| v * inv_n);
    (loss * inv_n, dlogits)
}

/// Gradient of the (summed) cross-entropy on logits, without the 1/n factor.
/// The per-example rows are independent, so elementwise signs match the
/// mean-loss gradient.
pub fn ce_grad_logits<F: Real>(logits: &Array2<F>, labels: &[usize]) -> Array2<F> {
    let mut d = softmax(logits);
    for (i, &y) in labels.iter().enumerate() {
        d[[i, y]] -= F::one();
    }
    d
}

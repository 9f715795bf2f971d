//! Batch normalization over (n, c, h, w) with per-channel statistics.

use ndarray::{Array1, Array4, Axis};

use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct BatchNorm2d<F> {
    pub gamma: Array1<F>,
    pub beta: Array1<F>,
    pub running_mean: Array1<F>,
    pub running_var: Array1<F>,
    pub eps: F,
    pub momentum: F,
}

#[derive(Debug, Clone)]
pub struct BatchNorm2dGrads<F> {
    pub gamma: Array1<F>,
    pub beta: Array1<F>,
}

/// Training-mode cache; eval-mode backward needs nothing beyond the layer.
#[derive(Debug, Clone)]
pub enum BnCache<F> {
    Train { xhat: Array4<F>, inv_std: Array1<F> },
    Eval,
}

impl<F: Real> BatchNorm2d<F> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            eps: F::c(1e-5),
            momentum: F::c(0.1),
        }
    }

    pub fn zero_grads(&self) -> BatchNorm2dGrads<F> {
        BatchNorm2dGrads {
            gamma: Array1::zeros(self.gamma.raw_dim()),
            beta: Array1::zeros(self.beta.raw_dim()),
        }
    }

    pub fn param_count(&self) -> usize {
        self.gamma.len() + self.beta.len()
    }

    /// Eval-mode forward using running statistics.
    pub fn forward_eval(&self, x: &Array4<F>) -> Array4<F> {
        let (_, c, _, _) = x.dim();
        assert_eq!(c, self.gamma.len(), "batchnorm channels");
        let mut y = x.clone();
        for ci in 0..c {
            let inv = (self.running_var[ci] + self.eps).sqrt().recip();
            let scale = self.gamma[ci] * inv;
            let shift = self.beta[ci] - self.running_mean[ci] * scale;
            y.index_axis_mut(Axis(1), ci)
                .mapv_inplace(|v| v * scale + shift);
        }
        y
    }

    /// Training-mode forward on batch statistics; updates running stats.
    pub fn forward_train(&mut self, x: &Array4<F>) -> (Array4<F>, BnCache<F>) {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.gamma.len(), "batchnorm channels");
        let count = F::c((n * h * w) as f64);
        let mut xhat = x.clone();
        let mut inv_std = Array1::zeros(c);
        for ci in 0..c {
            let lane = x.index_axis(Axis(1), ci);
            let mean = lane.sum() / count;
            let var = lane.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / count;
            let inv = (var + self.eps).sqrt().recip();
            inv_std[ci] = inv;
            xhat.index_axis_mut(Axis(1), ci)
                .mapv_inplace(|v| (v - mean) * inv);
            // Unbiased variance for the running estimate.
            let denom = (n * h * w).max(2) - 1;
            let var_unbiased = var * count / F::c(denom as f64);
            let m = self.momentum;
            self.running_mean[ci] = self.running_mean[ci] * (F::one() - m) + mean * m;
            self.running_var[ci] = self.running_var[ci] * (F::one() - m) + var_unbiased * m;
        }
        let mut y = xhat.clone();
        for ci in 0..c {
            let (g, b) = (self.gamma[ci], self.beta[ci]);
            y.index_axis_mut(Axis(1), ci).mapv_inplace(|v| v * g + b);
        }
        (y, BnCache::Train { xhat, inv_std })
    }

    pub fn backward(
        &self,
        cache: &BnCache<F>,
        gout: &Array4<F>,
        grads: Option<&mut BatchNorm2dGrads<F>>,
    ) -> Array4<F> {
        match cache {
            BnCache::Eval => {
                assert!(
                    grads.is_none(),
                    "parameter gradients need a training-mode cache"
                );
                let (_, c, _, _) = gout.dim();
                let mut dx = gout.clone();
                for ci in 0..c {
                    let scale = self.gamma[ci] * (self.running_var[ci] + self.eps).sqrt().recip();
                    dx.index_axis_mut(Axis(1), ci).mapv_inplace(|v| v * scale);
                }
                dx
            }
            BnCache::Train { xhat, inv_std } => {
                let (n, c, h, w) = gout.dim();
                let count = F::c((n * h * w) as f64);
                let mut dx = Array4::zeros((n, c, h, w));
                let mut dgamma = Array1::zeros(c);
                let mut dbeta = Array1::zeros(c);
                for ci in 0..c {
                    let g = gout.index_axis(Axis(1), ci);
                    let xh = xhat.index_axis(Axis(1), ci);
                    let sum_g = g.sum();
                    let sum_gx = g
                        .iter()
                        .zip(xh.iter())
                        .map(|(&a, &b)| a * b)
                        .sum::<F>();
                    dgamma[ci] = sum_gx;
                    dbeta[ci] = sum_g;
                    let scale = self.gamma[ci] * inv_std[ci];
                    let mut dxc = dx.index_axis_mut(Axis(1), ci);
                    ndarray::Zip::from(&mut dxc).and(&g).and(&xh).for_each(
                        |d, &gv, &xv| {
                            *d = scale * (gv - sum_g / count - xv * sum_gx / count);
                        },
                    );
                }
                if let Some(gr) = grads {
                    gr.gamma += &dgamma;
                    gr.beta += &dbeta;
                }
                dx
            }
        }
    }
}

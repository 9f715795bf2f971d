//! Adaptive-moment gradient descent.

use ndarray::{ArrayD, ArrayViewD, ArrayViewMutD};

use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct Adam<F> {
    pub lr: F,
    pub beta1: F,
    pub beta2: F,
    pub eps: F,
    t: u64,
    m: Vec<ArrayD<F>>,
    v: Vec<ArrayD<F>>,
}

impl<F: Real> Adam<F> {
    pub fn new(lr: F) -> Self {
        Self {
            lr,
            beta1: F::c(0.9),
            beta2: F::c(0.999),
            eps: F::c(1e-8),
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// One update. Parameter and gradient views must be supplied in the
    /// same order on every call.
    pub fn step(&mut self, mut params: Vec<ArrayViewMutD<F>>, grads: &[ArrayViewD<F>]) {
        assert_eq!(params.len(), grads.len(), "params/grads count");
        if self.m.is_empty() {
            self.m = params.iter().map(|p| ArrayD::zeros(p.raw_dim())).collect();
            self.v = params.iter().map(|p| ArrayD::zeros(p.raw_dim())).collect();
        }
        assert_eq!(self.m.len(), params.len(), "optimizer state count");
        self.t += 1;
        let b1 = self.beta1;
        let b2 = self.beta2;
        let bc1 = F::one() - b1.powi(self.t as i32);
        let bc2 = F::one() - b2.powi(self.t as i32);
        let step = self.lr * bc2.sqrt() / bc1;
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            assert_eq!(p.shape(), g.shape(), "param/grad shape");
            ndarray::Zip::from(p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|pv, &gv, mv, vv| {
                    *mv = b1 * *mv + (F::one() - b1) * gv;
                    *vv = b2 * *vv + (F::one() - b2) * gv * gv;
                    *pv -= step * *mv / (vv.sqrt() + self.eps);
                });
        }
    }
}

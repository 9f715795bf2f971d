//! Conv + batch-norm (+ optional ReLU) unit shared by all classifier
//! architectures.

use ndarray::{Array4, ArrayViewD, ArrayViewMutD};
use rand::rngs::StdRng;

use featsent_nn::act::{relu, relu_backward};
use featsent_nn::conv::{Conv2d, Conv2dGrads};
use featsent_nn::norm::{BatchNorm2d, BatchNorm2dGrads, BnCache};
use featsent_nn::Real;

#[derive(Debug, Clone)]
pub struct ConvBn<F> {
    pub conv: Conv2d<F>,
    pub bn: BatchNorm2d<F>,
    pub relu: bool,
}

#[derive(Debug, Clone)]
pub struct ConvBnCache<F> {
    /// Input; kept only when parameter gradients will be requested.
    pub x: Option<Array4<F>>,
    pub in_hw: (usize, usize),
    pub bn: BnCache<F>,
    /// Post-activation output; kept only when the unit has a ReLU.
    pub y: Option<Array4<F>>,
}

#[derive(Debug, Clone)]
pub struct ConvBnGrads<F> {
    pub conv: Conv2dGrads<F>,
    pub bn: BatchNorm2dGrads<F>,
}

impl<F: Real> ConvBn<F> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        rng: &mut StdRng,
        c_in: usize,
        c_out: usize,
        kernel: (usize, usize),
        stride: usize,
        padding: (usize, usize),
        with_relu: bool,
    ) -> Self {
        Self {
            conv: Conv2d::new(rng, c_in, c_out, kernel, stride, padding, false),
            bn: BatchNorm2d::new(c_out),
            relu: with_relu,
        }
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        self.conv.out_hw(h, w)
    }

    pub fn forward_eval(&self, x: &Array4<F>) -> Array4<F> {
        let y = self.bn.forward_eval(&self.conv.forward(x));
        if self.relu {
            relu(&y)
        } else {
            y
        }
    }

    pub fn forward_eval_cached(&self, x: &Array4<F>, store_input: bool) -> (Array4<F>, ConvBnCache<F>) {
        let (_, _, h, w) = x.dim();
        let y = self.bn.forward_eval(&self.conv.forward(x));
        let y = if self.relu { relu(&y) } else { y };
        let cache = ConvBnCache {
            x: store_input.then(|| x.clone()),
            in_hw: (h, w),
            bn: BnCache::Eval,
            y: self.relu.then(|| y.clone()),
        };
        (y, cache)
    }

    pub fn forward_train(&mut self, x: &Array4<F>) -> (Array4<F>, ConvBnCache<F>) {
        let (_, _, h, w) = x.dim();
        let (pre, bn_cache) = self.bn.forward_train(&self.conv.forward(x));
        let y = if self.relu { relu(&pre) } else { pre };
        let cache = ConvBnCache {
            x: Some(x.clone()),
            in_hw: (h, w),
            bn: bn_cache,
            y: self.relu.then(|| y.clone()),
        };
        (y, cache)
    }

    pub fn backward(
        &self,
        cache: &ConvBnCache<F>,
        gout: &Array4<F>,
        grads: Option<&mut ConvBnGrads<F>>,
    ) -> Array4<F> {
        let d_bn_out = if self.relu {
            relu_backward(cache.y.as_ref().expect("relu cache"), gout)
        } else {
            gout.clone()
        };
        match grads {
            Some(gr) => {
                let d_conv_out = self.bn.backward(&cache.bn, &d_bn_out, Some(&mut gr.bn));
                let x = cache.x.as_ref().expect("input cache for parameter grads");
                self.conv.backward(x, &d_conv_out, Some(&mut gr.conv))
            }
            None => {
                let d_conv_out = self.bn.backward(&cache.bn, &d_bn_out, None);
                self.conv.backward_input(cache.in_hw, &d_conv_out)
            }
        }
    }

    pub fn zero_grads(&self) -> ConvBnGrads<F> {
        ConvBnGrads {
            conv: self.conv.zero_grads(),
            bn: self.bn.zero_grads(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.conv.param_count() + self.bn.param_count()
    }

    pub fn param_views(&self) -> Vec<ArrayViewD<'_, F>> {
        vec![
            self.conv.weight.view().into_dyn(),
            self.bn.gamma.view().into_dyn(),
            self.bn.beta.view().into_dyn(),
        ]
    }

    pub fn param_views_mut(&mut self) -> Vec<ArrayViewMutD<'_, F>> {
        vec![
            self.conv.weight.view_mut().into_dyn(),
            self.bn.gamma.view_mut().into_dyn(),
            self.bn.beta.view_mut().into_dyn(),
        ]
    }

    /// Learnable parameters plus batch-norm running statistics, for
    /// checkpoints and determinism comparisons.
    pub fn state_views<'a>(&'a self, prefix: &str, out: &mut Vec<(String, ArrayViewD<'a, F>)>) {
        out.push((format!("{prefix}.conv.weight"), self.conv.weight.view().into_dyn()));
        out.push((format!("{prefix}.bn.gamma"), self.bn.gamma.view().into_dyn()));
        out.push((format!("{prefix}.bn.beta"), self.bn.beta.view().into_dyn()));
        out.push((format!("{prefix}.bn.running_mean"), self.bn.running_mean.view().into_dyn()));
        out.push((format!("{prefix}.bn.running_var"), self.bn.running_var.view().into_dyn()));
    }

    pub fn state_views_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, ArrayViewMutD<'a, F>)>) {
        out.push((format!("{prefix}.conv.weight"), self.conv.weight.view_mut().into_dyn()));
        out.push((format!("{prefix}.bn.gamma"), self.bn.gamma.view_mut().into_dyn()));
        out.push((format!("{prefix}.bn.beta"), self.bn.beta.view_mut().into_dyn()));
        out.push((format!("{prefix}.bn.running_mean"), self.bn.running_mean.view_mut().into_dyn()));
        out.push((format!("{prefix}.bn.running_var"), self.bn.running_var.view_mut().into_dyn()));
    }

    pub fn grad_views<'a>(grads: &'a ConvBnGrads<F>) -> Vec<ArrayViewD<'a, F>> {
        vec![
            grads.conv.weight.view().into_dyn(),
            grads.bn.gamma.view().into_dyn(),
            grads.bn.beta.view().into_dyn(),
        ]
    }
}

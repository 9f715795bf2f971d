//! Four-block convolutional classifier for desk-scale runs. Blocks B1..B4
//! double the channel count (16/32/64/128) and halve the spatial size via
//! a stride-2 convolution; each block output is a tap point.

use ndarray::{Array2, Array4, ArrayViewD, ArrayViewMutD};
use rand::rngs::StdRng;

use featsent_nn::linear::{Linear, LinearGrads};
use featsent_nn::pool::{global_avg_pool, global_avg_pool_backward};
use featsent_nn::Real;

use super::block::{ConvBn, ConvBnCache, ConvBnGrads};
use super::ClassifierSpec;

pub const TINYCNN_TAPS: [&str; 4] = ["B1", "B2", "B3", "B4"];
const CHANNELS: [usize; 4] = [16, 32, 64, 128];

#[derive(Debug, Clone)]
pub struct TinyCnn<F> {
    pub blocks: Vec<(ConvBn<F>, ConvBn<F>)>,
    pub fc: Linear<F>,
}

#[derive(Debug)]
pub struct TinyCnnCache<F> {
    pairs: Vec<(ConvBnCache<F>, ConvBnCache<F>)>,
    gap_in: (usize, usize, usize, usize),
    feat: Array2<F>,
}

#[derive(Debug, Clone)]
pub struct TinyCnnGrads<F> {
    pub blocks: Vec<(ConvBnGrads<F>, ConvBnGrads<F>)>,
    pub fc: LinearGrads<F>,
}

impl<F: Real> TinyCnn<F> {
    pub fn new(rng: &mut StdRng, spec: &ClassifierSpec) -> Self {
        let mut blocks = Vec::with_capacity(4);
        let mut c_in = spec.input_shape.0;
        for &c_out in CHANNELS.iter() {
            let a = ConvBn::new(rng, c_in, c_out, (3, 3), 1, (1, 1), true);
            let b = ConvBn::new(rng, c_out, c_out, (3, 3), 2, (1, 1), true);
            blocks.push((a, b));
            c_in = c_out;
        }
        let fc = Linear::new(rng, CHANNELS[3], spec.num_classes);
        Self { blocks, fc }
    }

    pub fn forward_taps(&self, x: &Array4<F>, points: &[usize]) -> (Array2<F>, Vec<Array4<F>>) {
        let mut taps = Vec::with_capacity(points.len());
        let mut cur = x.clone();
        for (i, (a, b)) in self.blocks.iter().enumerate() {
            cur = b.forward_eval(&a.forward_eval(&cur));
            if points.contains(&i) {
                taps.push(cur.clone());
            }
        }
        let feat = global_avg_pool(&cur);
        (self.fc.forward(&feat), taps)
    }

    pub fn forward_cached(
        &self,
        x: &Array4<F>,
        points: &[usize],
        store_input: bool,
    ) -> (Array2<F>, Vec<Array4<F>>, TinyCnnCache<F>) {
        let mut taps = Vec::with_capacity(points.len());
        let mut pairs = Vec::with_capacity(4);
        let mut cur = x.clone();
        for (i, (a, b)) in self.blocks.iter().enumerate() {
            let (ya, ca) = a.forward_eval_cached(&cur, store_input);
            let (yb, cb) = b.forward_eval_cached(&ya, store_input);
            pairs.push((ca, cb));
            cur = yb;
            if points.contains(&i) {
                taps.push(cur.clone());
            }
        }
        let gap_in = cur.dim();
        let feat = global_avg_pool(&cur);
        let logits = self.fc.forward(&feat);
        (logits, taps, TinyCnnCache { pairs, gap_in, feat })
    }

    pub fn forward_train(&mut self, x: &Array4<F>) -> (Array2<F>, TinyCnnCache<F>) {
        let mut pairs = Vec::with_capacity(4);
        let mut cur = x.clone();
        for (a, b) in self.blocks.iter_mut() {
            let (ya, ca) = a.forward_train(&cur);
            let (yb, cb) = b.forward_train(&ya);
            pairs.push((ca, cb));
            cur = yb;
        }
        let gap_in = cur.dim();
        let feat = global_avg_pool(&cur);
        let logits = self.fc.forward(&feat);
        (logits, TinyCnnCache { pairs, gap_in, feat })
    }

    pub fn backward(
        &self,
        cache: &TinyCnnCache<F>,
        dlogits: &Array2<F>,
        tap_grads: &[(usize, &Array4<F>)],
        mut grads: Option<&mut TinyCnnGrads<F>>,
    ) -> Array4<F> {
        let dfeat = self
            .fc
            .backward(&cache.feat, dlogits, grads.as_mut().map(|g| &mut g.fc));
        let mut d = global_avg_pool_backward(cache.gap_in, &dfeat);
        for i in (0..self.blocks.len()).rev() {
            if let Some((_, g)) = tap_grads.iter().find(|(p, _)| *p == i) {
                d += *g;
            }
            let (ga, gb) = match grads.as_mut() {
                Some(g) => {
                    let (a, b) = &mut g.blocks[i];
                    (Some(a), Some(b))
                }
                None => (None, None),
            };
            d = self.blocks[i].1.backward(&cache.pairs[i].1, &d, gb);
            d = self.blocks[i].0.backward(&cache.pairs[i].0, &d, ga);
        }
        d
    }

    pub fn zero_grads(&self) -> TinyCnnGrads<F> {
        TinyCnnGrads {
            blocks: self
                .blocks
                .iter()
                .map(|(a, b)| (a.zero_grads(), b.zero_grads()))
                .collect(),
            fc: self.fc.zero_grads(),
        }
    }

    pub fn param_views(&self) -> Vec<ArrayViewD<'_, F>> {
        let mut v = Vec::new();
        for (a, b) in &self.blocks {
            v.extend(a.param_views());
            v.extend(b.param_views());
        }
        v.push(self.fc.weight.view().into_dyn());
        v.push(self.fc.bias.view().into_dyn());
        v
    }

    pub fn param_views_mut(&mut self) -> Vec<ArrayViewMutD<'_, F>> {
        let mut v = Vec::new();
        for (a, b) in &mut self.blocks {
            v.extend(a.param_views_mut());
            v.extend(b.param_views_mut());
        }
        v.push(self.fc.weight.view_mut().into_dyn());
        v.push(self.fc.bias.view_mut().into_dyn());
        v
    }

    pub fn grad_views<'a>(grads: &'a TinyCnnGrads<F>) -> Vec<ArrayViewD<'a, F>> {
        let mut v = Vec::new();
        for (a, b) in &grads.blocks {
            v.extend(ConvBn::grad_views(a));
            v.extend(ConvBn::grad_views(b));
        }
        v.push(grads.fc.weight.view().into_dyn());
        v.push(grads.fc.bias.view().into_dyn());
        v
    }

    pub fn state_views(&self) -> Vec<(String, ArrayViewD<'_, F>)> {
        let mut v = Vec::new();
        for (i, (a, b)) in self.blocks.iter().enumerate() {
            a.state_views(&format!("b{}a", i + 1), &mut v);
            b.state_views(&format!("b{}b", i + 1), &mut v);
        }
        v.push(("fc.weight".into(), self.fc.weight.view().into_dyn()));
        v.push(("fc.bias".into(), self.fc.bias.view().into_dyn()));
        v
    }

    pub fn state_views_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, F>)> {
        let mut v = Vec::new();
        for (i, (a, b)) in self.blocks.iter_mut().enumerate() {
            a.state_views_mut(&format!("b{}a", i + 1), &mut v);
            b.state_views_mut(&format!("b{}b", i + 1), &mut v);
        }
        v.push(("fc.weight".into(), self.fc.weight.view_mut().into_dyn()));
        v.push(("fc.bias".into(), self.fc.bias.view_mut().into_dyn()));
        v
    }
}

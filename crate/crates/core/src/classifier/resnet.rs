//! 34-layer residual classifier. Feature extraction is divided into the
//! hidden blocks BN1 (conv+bn stem) and Res1..Res4 (basic residual
//! blocks), each of which is a tap point.

use ndarray::{Array2, Array4, ArrayViewD, ArrayViewMutD};
use rand::rngs::StdRng;

use featsent_nn::act::{relu, relu_backward};
use featsent_nn::linear::{Linear, LinearGrads};
use featsent_nn::pool::{global_avg_pool, global_avg_pool_backward};
use featsent_nn::Real;

use super::block::{ConvBn, ConvBnCache, ConvBnGrads};
use super::ClassifierSpec;

pub const RESNET34_TAPS: [&str; 5] = ["BN1", "Res1", "Res2", "Res3", "Res4"];
const LAYER_SIZES: [usize; 4] = [3, 4, 6, 3];
const LAYER_CHANNELS: [usize; 4] = [64, 128, 256, 512];

#[derive(Debug, Clone)]
pub struct BasicBlock<F> {
    c1: ConvBn<F>,
    c2: ConvBn<F>,
    down: Option<ConvBn<F>>,
}

#[derive(Debug)]
pub struct BasicBlockCache<F> {
    c1: ConvBnCache<F>,
    c2: ConvBnCache<F>,
    down: Option<ConvBnCache<F>>,
    y: Array4<F>,
}

#[derive(Debug, Clone)]
pub struct BasicBlockGrads<F> {
    c1: ConvBnGrads<F>,
    c2: ConvBnGrads<F>,
    down: Option<ConvBnGrads<F>>,
}

impl<F: Real> BasicBlock<F> {
    fn new(rng: &mut StdRng, c_in: usize, c_out: usize, stride: usize) -> Self {
        let c1 = ConvBn::new(rng, c_in, c_out, (3, 3), stride, (1, 1), true);
        let c2 = ConvBn::new(rng, c_out, c_out, (3, 3), 1, (1, 1), false);
        let down = (stride != 1 || c_in != c_out)
            .then(|| ConvBn::new(rng, c_in, c_out, (1, 1), stride, (0, 0), false));
        Self { c1, c2, down }
    }

    fn forward_eval(&self, x: &Array4<F>) -> Array4<F> {
        let h = self.c2.forward_eval(&self.c1.forward_eval(x));
        let s = match &self.down {
            Some(d) => d.forward_eval(x),
            None => x.clone(),
        };
        relu(&(h + s))
    }

    fn forward_eval_cached(&self, x: &Array4<F>, store_input: bool) -> (Array4<F>, BasicBlockCache<F>) {
        let (h1, c1) = self.c1.forward_eval_cached(x, store_input);
        let (h2, c2) = self.c2.forward_eval_cached(&h1, store_input);
        let (s, down) = match &self.down {
            Some(d) => {
                let (s, c) = d.forward_eval_cached(x, store_input);
                (s, Some(c))
            }
            None => (x.clone(), None),
        };
        let y = relu(&(h2 + s));
        (y.clone(), BasicBlockCache { c1, c2, down, y })
    }

    fn forward_train(&mut self, x: &Array4<F>) -> (Array4<F>, BasicBlockCache<F>) {
        let (h1, c1) = self.c1.forward_train(x);
        let (h2, c2) = self.c2.forward_train(&h1);
        let (s, down) = match &mut self.down {
            Some(d) => {
                let (s, c) = d.forward_train(x);
                (s, Some(c))
            }
            None => (x.clone(), None),
        };
        let y = relu(&(h2 + s));
        (y.clone(), BasicBlockCache { c1, c2, down, y })
    }

    fn backward(
        &self,
        cache: &BasicBlockCache<F>,
        gout: &Array4<F>,
        grads: Option<&mut BasicBlockGrads<F>>,
    ) -> Array4<F> {
        let dz = relu_backward(&cache.y, gout);
        let (g1, g2, gd) = match grads {
            Some(g) => (Some(&mut g.c1), Some(&mut g.c2), g.down.as_mut()),
            None => (None, None, None),
        };
        let dh1 = self.c2.backward(&cache.c2, &dz, g2);
        let mut dx = self.c1.backward(&cache.c1, &dh1, g1);
        match (&self.down, &cache.down) {
            (Some(d), Some(dc)) => {
                dx += &d.backward(dc, &dz, gd);
            }
            _ => {
                dx += &dz;
            }
        }
        dx
    }

    fn zero_grads(&self) -> BasicBlockGrads<F> {
        BasicBlockGrads {
            c1: self.c1.zero_grads(),
            c2: self.c2.zero_grads(),
            down: self.down.as_ref().map(|d| d.zero_grads()),
        }
    }

    fn param_count(&self) -> usize {
        self.c1.param_count()
            + self.c2.param_count()
            + self.down.as_ref().map_or(0, |d| d.param_count())
    }
}

#[derive(Debug, Clone)]
pub struct ResNet34<F> {
    stem: ConvBn<F>,
    layers: Vec<Vec<BasicBlock<F>>>,
    fc: Linear<F>,
}

#[derive(Debug)]
pub struct ResNet34Cache<F> {
    stem: ConvBnCache<F>,
    layers: Vec<Vec<BasicBlockCache<F>>>,
    gap_in: (usize, usize, usize, usize),
    feat: Array2<F>,
}

#[derive(Debug, Clone)]
pub struct ResNet34Grads<F> {
    stem: ConvBnGrads<F>,
    layers: Vec<Vec<BasicBlockGrads<F>>>,
    fc: LinearGrads<F>,
}

impl<F: Real> ResNet34<F> {
    pub fn new(rng: &mut StdRng, spec: &ClassifierSpec) -> Self {
        let stem = ConvBn::new(rng, spec.input_shape.0, 64, (3, 3), 1, (1, 1), true);
        let mut layers = Vec::with_capacity(4);
        let mut c_in = 64;
        for (li, (&count, &c_out)) in LAYER_SIZES.iter().zip(LAYER_CHANNELS.iter()).enumerate() {
            let mut layer = Vec::with_capacity(count);
            for bi in 0..count {
                let stride = if bi == 0 && li > 0 { 2 } else { 1 };
                layer.push(BasicBlock::new(rng, c_in, c_out, stride));
                c_in = c_out;
            }
            layers.push(layer);
        }
        let fc = Linear::new(rng, LAYER_CHANNELS[3], spec.num_classes);
        Self { stem, layers, fc }
    }

    pub fn forward_taps(&self, x: &Array4<F>, points: &[usize]) -> (Array2<F>, Vec<Array4<F>>) {
        let mut taps = Vec::with_capacity(points.len());
        let mut cur = self.stem.forward_eval(x);
        if points.contains(&0) {
            taps.push(cur.clone());
        }
        for (li, layer) in self.layers.iter().enumerate() {
            for block in layer {
                cur = block.forward_eval(&cur);
            }
            if points.contains(&(li + 1)) {
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
    ) -> (Array2<F>, Vec<Array4<F>>, ResNet34Cache<F>) {
        let mut taps = Vec::with_capacity(points.len());
        let (mut cur, stem_cache) = self.stem.forward_eval_cached(x, store_input);
        if points.contains(&0) {
            taps.push(cur.clone());
        }
        let mut layer_caches = Vec::with_capacity(4);
        for (li, layer) in self.layers.iter().enumerate() {
            let mut caches = Vec::with_capacity(layer.len());
            for block in layer {
                let (y, c) = block.forward_eval_cached(&cur, store_input);
                caches.push(c);
                cur = y;
            }
            layer_caches.push(caches);
            if points.contains(&(li + 1)) {
                taps.push(cur.clone());
            }
        }
        let gap_in = cur.dim();
        let feat = global_avg_pool(&cur);
        let logits = self.fc.forward(&feat);
        (
            logits,
            taps,
            ResNet34Cache {
                stem: stem_cache,
                layers: layer_caches,
                gap_in,
                feat,
            },
        )
    }

    pub fn forward_train(&mut self, x: &Array4<F>) -> (Array2<F>, ResNet34Cache<F>) {
        let (mut cur, stem_cache) = self.stem.forward_train(x);
        let mut layer_caches = Vec::with_capacity(4);
        for layer in self.layers.iter_mut() {
            let mut caches = Vec::with_capacity(layer.len());
            for block in layer.iter_mut() {
                let (y, c) = block.forward_train(&cur);
                caches.push(c);
                cur = y;
            }
            layer_caches.push(caches);
        }
        let gap_in = cur.dim();
        let feat = global_avg_pool(&cur);
        let logits = self.fc.forward(&feat);
        (
            logits,
            ResNet34Cache {
                stem: stem_cache,
                layers: layer_caches,
                gap_in,
                feat,
            },
        )
    }

    pub fn backward(
        &self,
        cache: &ResNet34Cache<F>,
        dlogits: &Array2<F>,
        tap_grads: &[(usize, &Array4<F>)],
        mut grads: Option<&mut ResNet34Grads<F>>,
    ) -> Array4<F> {
        let dfeat = self
            .fc
            .backward(&cache.feat, dlogits, grads.as_mut().map(|g| &mut g.fc));
        let mut d = global_avg_pool_backward(cache.gap_in, &dfeat);
        for li in (0..self.layers.len()).rev() {
            if let Some((_, g)) = tap_grads.iter().find(|(p, _)| *p == li + 1) {
                d += *g;
            }
            for bi in (0..self.layers[li].len()).rev() {
                let bg = grads.as_mut().map(|g| &mut g.layers[li][bi]);
                d = self.layers[li][bi].backward(&cache.layers[li][bi], &d, bg);
            }
        }
        if let Some((_, g)) = tap_grads.iter().find(|(p, _)| *p == 0) {
            d += *g;
        }
        self.stem
            .backward(&cache.stem, &d, grads.as_mut().map(|g| &mut g.stem))
    }

    pub fn zero_grads(&self) -> ResNet34Grads<F> {
        ResNet34Grads {
            stem: self.stem.zero_grads(),
            layers: self
                .layers
                .iter()
                .map(|l| l.iter().map(|b| b.zero_grads()).collect())
                .collect(),
            fc: self.fc.zero_grads(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.stem.param_count()
            + self
                .layers
                .iter()
                .flat_map(|l| l.iter().map(|b| b.param_count()))
                .sum::<usize>()
            + self.fc.param_count()
    }

    pub fn param_views(&self) -> Vec<ArrayViewD<'_, F>> {
        let mut v = self.stem.param_views();
        for layer in &self.layers {
            for block in layer {
                v.extend(block.c1.param_views());
                v.extend(block.c2.param_views());
                if let Some(d) = &block.down {
                    v.extend(d.param_views());
                }
            }
        }
        v.push(self.fc.weight.view().into_dyn());
        v.push(self.fc.bias.view().into_dyn());
        v
    }

    pub fn param_views_mut(&mut self) -> Vec<ArrayViewMutD<'_, F>> {
        let mut v = self.stem.param_views_mut();
        for layer in &mut self.layers {
            for block in layer {
                v.extend(block.c1.param_views_mut());
                v.extend(block.c2.param_views_mut());
                if let Some(d) = &mut block.down {
                    v.extend(d.param_views_mut());
                }
            }
        }
        v.push(self.fc.weight.view_mut().into_dyn());
        v.push(self.fc.bias.view_mut().into_dyn());
        v
    }

    pub fn grad_views<'a>(grads: &'a ResNet34Grads<F>) -> Vec<ArrayViewD<'a, F>> {
        let mut v = ConvBn::grad_views(&grads.stem);
        for layer in &grads.layers {
            for block in layer {
                v.extend(ConvBn::grad_views(&block.c1));
                v.extend(ConvBn::grad_views(&block.c2));
                if let Some(d) = &block.down {
                    v.extend(ConvBn::grad_views(d));
                }
            }
        }
        v.push(grads.fc.weight.view().into_dyn());
        v.push(grads.fc.bias.view().into_dyn());
        v
    }

    pub fn state_views(&self) -> Vec<(String, ArrayViewD<'_, F>)> {
        let mut v = Vec::new();
        self.stem.state_views("stem", &mut v);
        for (li, layer) in self.layers.iter().enumerate() {
            for (bi, block) in layer.iter().enumerate() {
                block.c1.state_views(&format!("l{li}.{bi}.c1"), &mut v);
                block.c2.state_views(&format!("l{li}.{bi}.c2"), &mut v);
                if let Some(d) = &block.down {
                    d.state_views(&format!("l{li}.{bi}.down"), &mut v);
                }
            }
        }
        v.push(("fc.weight".into(), self.fc.weight.view().into_dyn()));
        v.push(("fc.bias".into(), self.fc.bias.view().into_dyn()));
        v
    }

    pub fn state_views_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, F>)> {
        let mut v = Vec::new();
        self.stem.state_views_mut("stem", &mut v);
        for (li, layer) in self.layers.iter_mut().enumerate() {
            for (bi, block) in layer.iter_mut().enumerate() {
                block.c1.state_views_mut(&format!("l{li}.{bi}.c1"), &mut v);
                block.c2.state_views_mut(&format!("l{li}.{bi}.c2"), &mut v);
                if let Some(d) = &mut block.down {
                    d.state_views_mut(&format!("l{li}.{bi}.down"), &mut v);
                }
            }
        }
        v.push(("fc.weight".into(), self.fc.weight.view_mut().into_dyn()));
        v.push(("fc.bias".into(), self.fc.bias.view_mut().into_dyn()));
        v
    }
}

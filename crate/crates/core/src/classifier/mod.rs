//! Image classifiers with named tap points on their hidden blocks.
//! A forward pass can copy out the feature map at each tapped block
//! alongside the logits; the backward pass accepts gradients injected
//! at those same points.

mod block;
mod checkpoint;
mod inception;
mod resnet;
mod tinycnn;
mod train;

pub use checkpoint::{checkpoint_hash, load_classifier, save_classifier, ClassifierManifest};
pub use inception::{InceptionV3, InceptionV3Grads, INCEPTION_TAPS};
pub use resnet::{ResNet34, ResNet34Grads, RESNET34_TAPS};
pub use tinycnn::{TinyCnn, TinyCnnGrads, TINYCNN_TAPS};
pub use train::{accuracy, gather, train_classifier, EpochStats};

use ndarray::{Array2, Array4, ArrayViewD, ArrayViewMutD};
use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::provenance::ContentHasher;
use featsent_nn::Real;

/// Pseudo-tap exposing the raw input image as a feature map.
pub const INPUT_TAP: &str = "Input";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Tinycnn,
    Resnet34,
    Inceptionv3,
}

impl Architecture {
    pub fn tap_names(&self) -> &'static [&'static str] {
        match self {
            Architecture::Tinycnn => &TINYCNN_TAPS,
            Architecture::Resnet34 => &RESNET34_TAPS,
            Architecture::Inceptionv3 => &INCEPTION_TAPS,
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Architecture::Tinycnn => "tinycnn",
            Architecture::Resnet34 => "resnet34",
            Architecture::Inceptionv3 => "inceptionv3",
        };
        write!(f, "{s}")
    }
}

/// (channels, width, height) input description plus class count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub architecture: Architecture,
    pub num_classes: usize,
    pub input_shape: (usize, usize, usize),
}

impl ClassifierSpec {
    pub fn validate(&self) -> Result<()> {
        let (c, w, h) = self.input_shape;
        if c != 1 && c != 3 {
            return Err(Error::InvalidConfig(format!(
                "input channels must be 1 or 3, got {c}"
            )));
        }
        if w < 8 || h < 8 {
            return Err(Error::InvalidConfig(format!(
                "input spatial size must be at least 8x8, got {w}x{h}"
            )));
        }
        if self.num_classes == 0 {
            return Err(Error::InvalidConfig("num_classes must be positive".into()));
        }
        if self.architecture == Architecture::Inceptionv3 && !InceptionV3::<f32>::min_input_ok(w, h)
        {
            return Err(Error::InvalidConfig(format!(
                "input {w}x{h} below the architecture's minimum spatial size"
            )));
        }
        Ok(())
    }
}

/// Where a tap is anchored: the raw input or a hidden block index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TapPoint {
    Input,
    Block(usize),
}

/// Ordered tap selection with probed feature-map dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapPlan {
    pub layer_ids: Vec<String>,
    pub points: Vec<TapPoint>,
    /// (c_i, w_i, h_i) per tap.
    pub dims: Vec<(usize, usize, usize)>,
}

impl TapPlan {
    pub fn len(&self) -> usize {
        self.layer_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layer_ids.is_empty()
    }

    /// Dimensions of the last tap: the word length and pooling target.
    pub fn last_dims(&self) -> (usize, usize, usize) {
        *self.dims.last().expect("non-empty plan")
    }
}

/// Ordered per-tap feature maps for one batch.
#[derive(Debug, Clone)]
pub struct FeatureSeries<F> {
    pub maps: Vec<Array4<F>>,
}

impl<F: Real> FeatureSeries<F> {
    pub fn batch_len(&self) -> usize {
        self.maps.first().map_or(0, |m| m.dim().0)
    }

    pub fn validate(&self, plan: &TapPlan) -> Result<()> {
        if self.maps.len() != plan.len() {
            return Err(Error::ShapeMismatch(format!(
                "series has {} maps, plan has {} taps",
                self.maps.len(),
                plan.len()
            )));
        }
        let batch = self.batch_len();
        for (i, (map, &(c, w, h))) in self.maps.iter().zip(plan.dims.iter()).enumerate() {
            let dim = map.dim();
            if dim != (batch, c, w, h) {
                return Err(Error::ShapeMismatch(format!(
                    "map {i} has shape {dim:?}, plan expects ({batch}, {c}, {w}, {h})"
                )));
            }
            if !map.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("feature map {i}")));
            }
        }
        Ok(())
    }

    /// Select a subset of rows (batch indices).
    pub fn select(&self, idx: &[usize]) -> FeatureSeries<F> {
        FeatureSeries {
            maps: self
                .maps
                .iter()
                .map(|m| ndarray::Array4::from_shape_fn(
                    (idx.len(), m.dim().1, m.dim().2, m.dim().3),
                    |(i, c, w, h)| m[[idx[i], c, w, h]],
                ))
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Classifier<F> {
    TinyCnn { net: TinyCnn<F>, spec: ClassifierSpec },
    ResNet34 { net: ResNet34<F>, spec: ClassifierSpec },
    InceptionV3 { net: InceptionV3<F>, spec: ClassifierSpec },
}

pub enum ClassifierCache<F> {
    TinyCnn(tinycnn::TinyCnnCache<F>),
    ResNet34(resnet::ResNet34Cache<F>),
    InceptionV3(inception::InceptionV3Cache<F>),
}

#[derive(Debug, Clone)]
pub enum ClassifierGrads<F> {
    TinyCnn(TinyCnnGrads<F>),
    ResNet34(ResNet34Grads<F>),
    InceptionV3(InceptionV3Grads<F>),
}

/// Build an initialized classifier; identical seeds give identical
/// parameters.
pub fn build_classifier<F: Real>(spec: &ClassifierSpec, seed: u64) -> Result<Classifier<F>> {
    spec.validate()?;
    let mut rng = StdRng::seed_from_u64(seed);
    Ok(match spec.architecture {
        Architecture::Tinycnn => Classifier::TinyCnn {
            net: TinyCnn::new(&mut rng, spec),
            spec: spec.clone(),
        },
        Architecture::Resnet34 => Classifier::ResNet34 {
            net: ResNet34::new(&mut rng, spec),
            spec: spec.clone(),
        },
        Architecture::Inceptionv3 => Classifier::InceptionV3 {
            net: InceptionV3::new(&mut rng, spec),
            spec: spec.clone(),
        },
    })
}

impl<F: Real> Classifier<F> {
    pub fn spec(&self) -> &ClassifierSpec {
        match self {
            Classifier::TinyCnn { spec, .. }
            | Classifier::ResNet34 { spec, .. }
            | Classifier::InceptionV3 { spec, .. } => spec,
        }
    }

    pub fn architecture(&self) -> Architecture {
        self.spec().architecture
    }

    pub fn num_classes(&self) -> usize {
        self.spec().num_classes
    }

    pub fn tap_names(&self) -> &'static [&'static str] {
        self.architecture().tap_names()
    }

    /// Resolve tap names to anchored points and probe their dimensions
    /// with a zero-input forward pass.
    pub fn plan_taps(&self, layer_ids: &[&str]) -> Result<TapPlan> {
        if layer_ids.is_empty() {
            return Err(Error::InvalidConfig("at least one tap required".into()));
        }
        let names = self.tap_names();
        let mut points = Vec::with_capacity(layer_ids.len());
        let mut seen = std::collections::HashSet::new();
        for &id in layer_ids {
            if !seen.insert(id.to_string()) {
                return Err(Error::DuplicateTap(id.into()));
            }
            if id == INPUT_TAP {
                points.push(TapPoint::Input);
                continue;
            }
            match names.iter().position(|&n| n == id) {
                Some(b) => points.push(TapPoint::Block(b)),
                None => return Err(Error::UnknownTap(id.into())),
            }
        }
        let order_key = |p: &TapPoint| match p {
            TapPoint::Input => -1isize,
            TapPoint::Block(b) => *b as isize,
        };
        for pair in points.windows(2) {
            if order_key(&pair[0]) >= order_key(&pair[1]) {
                return Err(Error::TapOrder(format!("{layer_ids:?}")));
            }
        }
        let (c, w, h) = self.spec().input_shape;
        let probe = Array4::<F>::zeros((1, c, w, h));
        let (_, series) = self.forward_series(&probe, &points)?;
        let dims = series
            .maps
            .iter()
            .map(|m| {
                let (_, c, w, h) = m.dim();
                (c, w, h)
            })
            .collect();
        Ok(TapPlan {
            layer_ids: layer_ids.iter().map(|s| s.to_string()).collect(),
            points,
            dims,
        })
    }

    fn block_points(points: &[TapPoint]) -> Vec<usize> {
        points
            .iter()
            .filter_map(|p| match p {
                TapPoint::Block(b) => Some(*b),
                TapPoint::Input => None,
            })
            .collect()
    }

    /// Assemble the full series (input pseudo-tap included) from block taps.
    fn weave_input(points: &[TapPoint], x: &Array4<F>, block_taps: Vec<Array4<F>>) -> Vec<Array4<F>> {
        let mut out = Vec::with_capacity(points.len());
        let mut it = block_taps.into_iter();
        for p in points {
            match p {
                TapPoint::Input => out.push(x.clone()),
                TapPoint::Block(_) => out.push(it.next().expect("tap count")),
            }
        }
        out
    }

    fn forward_series(&self, x: &Array4<F>, points: &[TapPoint]) -> Result<(Array2<F>, FeatureSeries<F>)> {
        let blocks = Self::block_points(points);
        let (logits, taps) = match self {
            Classifier::TinyCnn { net, .. } => net.forward_taps(x, &blocks),
            Classifier::ResNet34 { net, .. } => net.forward_taps(x, &blocks),
            Classifier::InceptionV3 { net, .. } => net.forward_taps(x, &blocks),
        };
        let maps = Self::weave_input(points, x, taps);
        Ok((logits, FeatureSeries { maps }))
    }

    fn check_input(&self, x: &Array4<F>) -> Result<()> {
        let (c, w, h) = self.spec().input_shape;
        let dim = x.dim();
        if (dim.1, dim.2, dim.3) != (c, w, h) {
            return Err(Error::ShapeMismatch(format!(
                "batch shape {dim:?} does not match input shape ({c}, {w}, {h})"
            )));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("input batch".into()));
        }
        Ok(())
    }

    /// Logits plus the tapped feature maps; classifier state unchanged.
    pub fn forward_with_taps(&self, x: &Array4<F>, plan: &TapPlan) -> Result<(Array2<F>, FeatureSeries<F>)> {
        self.check_input(x)?;
        let (logits, series) = self.forward_series(x, &plan.points)?;
        series.validate(plan)?;
        Ok((logits, series))
    }

    /// Plain logits (same code path as `forward_with_taps`, no taps).
    pub fn forward(&self, x: &Array4<F>) -> Result<Array2<F>> {
        self.check_input(x)?;
        Ok(self.forward_series(x, &[])?.0)
    }

    pub fn predict(&self, x: &Array4<F>) -> Result<Vec<usize>> {
        let logits = self.forward(x)?;
        Ok(argmax_rows(&logits))
    }

    /// Eval-mode forward that keeps the activations needed to backprop
    /// to the input. `store_input` additionally keeps per-layer inputs so
    /// parameter gradients can be requested.
    pub fn forward_cached(
        &self,
        x: &Array4<F>,
        points: &[TapPoint],
        store_input: bool,
    ) -> Result<(Array2<F>, FeatureSeries<F>, ClassifierCache<F>)> {
        self.check_input(x)?;
        let blocks = Self::block_points(points);
        let (logits, taps, cache) = match self {
            Classifier::TinyCnn { net, .. } => {
                let (l, t, c) = net.forward_cached(x, &blocks, store_input);
                (l, t, ClassifierCache::TinyCnn(c))
            }
            Classifier::ResNet34 { net, .. } => {
                let (l, t, c) = net.forward_cached(x, &blocks, store_input);
                (l, t, ClassifierCache::ResNet34(c))
            }
            Classifier::InceptionV3 { net, .. } => {
                let (l, t, c) = net.forward_cached(x, &blocks, store_input);
                (l, t, ClassifierCache::InceptionV3(c))
            }
        };
        let maps = Self::weave_input(points, x, taps);
        Ok((logits, FeatureSeries { maps }, cache))
    }

    /// Gradient at the input from a logits gradient plus gradients
    /// injected at the tap points (aligned with `points`).
    pub fn backward_input(
        &self,
        cache: &ClassifierCache<F>,
        dlogits: &Array2<F>,
        points: &[TapPoint],
        tap_grads: &[Option<&Array4<F>>],
    ) -> Array4<F> {
        let mut block_grads: Vec<(usize, &Array4<F>)> = Vec::new();
        let mut input_grad: Option<&Array4<F>> = None;
        for (p, g) in points.iter().zip(tap_grads.iter()) {
            if let Some(g) = g {
                match p {
                    TapPoint::Input => input_grad = Some(g),
                    TapPoint::Block(b) => block_grads.push((*b, g)),
                }
            }
        }
        let mut dx = match (self, cache) {
            (Classifier::TinyCnn { net, .. }, ClassifierCache::TinyCnn(c)) => {
                net.backward(c, dlogits, &block_grads, None)
            }
            (Classifier::ResNet34 { net, .. }, ClassifierCache::ResNet34(c)) => {
                net.backward(c, dlogits, &block_grads, None)
            }
            (Classifier::InceptionV3 { net, .. }, ClassifierCache::InceptionV3(c)) => {
                net.backward(c, dlogits, &block_grads, None)
            }
            _ => panic!("cache does not match classifier"),
        };
        if let Some(g) = input_grad {
            dx += g;
        }
        dx
    }

    /// Training-mode forward (batch-norm batch statistics, running stats
    /// updated).
    pub fn train_forward(&mut self, x: &Array4<F>) -> (Array2<F>, ClassifierCache<F>) {
        match self {
            Classifier::TinyCnn { net, .. } => {
                let (l, c) = net.forward_train(x);
                (l, ClassifierCache::TinyCnn(c))
            }
            Classifier::ResNet34 { net, .. } => {
                let (l, c) = net.forward_train(x);
                (l, ClassifierCache::ResNet34(c))
            }
            Classifier::InceptionV3 { net, .. } => {
                let (l, c) = net.forward_train(x);
                (l, ClassifierCache::InceptionV3(c))
            }
        }
    }

    pub fn zero_grads(&self) -> ClassifierGrads<F> {
        match self {
            Classifier::TinyCnn { net, .. } => ClassifierGrads::TinyCnn(net.zero_grads()),
            Classifier::ResNet34 { net, .. } => ClassifierGrads::ResNet34(net.zero_grads()),
            Classifier::InceptionV3 { net, .. } => ClassifierGrads::InceptionV3(net.zero_grads()),
        }
    }

    pub fn train_backward(
        &self,
        cache: &ClassifierCache<F>,
        dlogits: &Array2<F>,
        grads: &mut ClassifierGrads<F>,
    ) {
        match (self, cache, grads) {
            (
                Classifier::TinyCnn { net, .. },
                ClassifierCache::TinyCnn(c),
                ClassifierGrads::TinyCnn(g),
            ) => {
                net.backward(c, dlogits, &[], Some(g));
            }
            (
                Classifier::ResNet34 { net, .. },
                ClassifierCache::ResNet34(c),
                ClassifierGrads::ResNet34(g),
            ) => {
                net.backward(c, dlogits, &[], Some(g));
            }
            (
                Classifier::InceptionV3 { net, .. },
                ClassifierCache::InceptionV3(c),
                ClassifierGrads::InceptionV3(g),
            ) => {
                net.backward(c, dlogits, &[], Some(g));
            }
            _ => panic!("cache/grads do not match classifier"),
        }
    }

    pub fn param_views(&self) -> Vec<ArrayViewD<'_, F>> {
        match self {
            Classifier::TinyCnn { net, .. } => net.param_views(),
            Classifier::ResNet34 { net, .. } => net.param_views(),
            Classifier::InceptionV3 { net, .. } => net.param_views(),
        }
    }

    pub fn param_views_mut(&mut self) -> Vec<ArrayViewMutD<'_, F>> {
        match self {
            Classifier::TinyCnn { net, .. } => net.param_views_mut(),
            Classifier::ResNet34 { net, .. } => net.param_views_mut(),
            Classifier::InceptionV3 { net, .. } => net.param_views_mut(),
        }
    }

    pub fn grad_views<'a>(&self, grads: &'a ClassifierGrads<F>) -> Vec<ArrayViewD<'a, F>> {
        match grads {
            ClassifierGrads::TinyCnn(g) => TinyCnn::grad_views(g),
            ClassifierGrads::ResNet34(g) => ResNet34::grad_views(g),
            ClassifierGrads::InceptionV3(g) => InceptionV3::grad_views(g),
        }
    }

    pub fn state_views(&self) -> Vec<(String, ArrayViewD<'_, F>)> {
        match self {
            Classifier::TinyCnn { net, .. } => net.state_views(),
            Classifier::ResNet34 { net, .. } => net.state_views(),
            Classifier::InceptionV3 { net, .. } => net.state_views(),
        }
    }

    pub fn state_views_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, F>)> {
        match self {
            Classifier::TinyCnn { net, .. } => net.state_views_mut(),
            Classifier::ResNet34 { net, .. } => net.state_views_mut(),
            Classifier::InceptionV3 { net, .. } => net.state_views_mut(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.param_views().iter().map(|v| v.len()).sum()
    }

    /// Hash of the full model state; ties crafted sets and detectors to
    /// the exact classifier they were derived from.
    pub fn state_hash(&self) -> String {
        let mut h = ContentHasher::new();
        for (name, view) in self.state_views() {
            h.update_bytes(name.as_bytes());
            h.update_array(&view);
        }
        h.finish()
    }
}

pub fn argmax_rows<F: Real>(logits: &Array2<F>) -> Vec<usize> {
    logits
        .outer_iter()
        .map(|row| {
            let mut best = 0;
            for (i, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

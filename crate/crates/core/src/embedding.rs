//! Word embedding layer: a cascade of convolution-pooling (CP) modules
//! that unifies feature-map dimensions, followed by global average
//! pooling that turns each unified map into one word vector. Tap l is
//! embedded through CP_l ... CP_{L-1}; the last tap skips the cascade.

use ndarray::{s, Array2, Array3, Array4, ArrayViewD, ArrayViewMutD};
use rand::rngs::StdRng;
use rand::SeedableRng;

use featsent_nn::act::{relu, relu_backward};
use featsent_nn::conv::{Conv2d, Conv2dGrads};
use featsent_nn::pool::{adaptive_max_pool2d, max_pool2d_backward, MaxPoolCache};
use featsent_nn::Real;

use crate::classifier::{FeatureSeries, TapPlan};
use crate::error::{Error, Result};

/// One convolution-pooling module: 3x3 stride-1 same convolution with
/// bias and ReLU, then adaptive max pooling to the next tap's spatial
/// size.
#[derive(Debug, Clone)]
pub struct CpModule<F> {
    pub conv: Conv2d<F>,
    pub in_dims: (usize, usize, usize),
    pub out_dims: (usize, usize, usize),
}

#[derive(Debug)]
pub struct CpCache<F> {
    x: Option<Array4<F>>,
    pre_pool: Array4<F>,
    pool: MaxPoolCache,
}

impl<F: Real> CpModule<F> {
    fn new(rng: &mut StdRng, in_dims: (usize, usize, usize), out_dims: (usize, usize, usize)) -> Result<Self> {
        let (ci, wi, hi) = in_dims;
        let (co, wo, ho) = out_dims;
        if ci == 0 || co == 0 {
            return Err(Error::InvalidConfig("channel counts must be positive".into()));
        }
        if wo > wi || ho > hi {
            return Err(Error::InvalidConfig(format!(
                "pooling cannot upsample {wi}x{hi} to {wo}x{ho}"
            )));
        }
        Ok(Self {
            conv: Conv2d::new(rng, ci, co, (3, 3), 1, (1, 1), true),
            in_dims,
            out_dims,
        })
    }

    fn check_input(&self, fmap: &Array4<F>) -> Result<()> {
        let (_, c, w, h) = fmap.dim();
        if (c, w, h) != self.in_dims {
            return Err(Error::ShapeMismatch(format!(
                "CP input ({c}, {w}, {h}) does not match expected {:?}",
                self.in_dims
            )));
        }
        Ok(())
    }

    /// Resize a feature map to the next tap's dimensions.
    pub fn apply(&self, fmap: &Array4<F>) -> Result<Array4<F>> {
        self.check_input(fmap)?;
        let act = relu(&self.conv.forward(fmap));
        Ok(adaptive_max_pool2d(&act, (self.out_dims.1, self.out_dims.2)).0)
    }

    fn apply_cached(&self, fmap: &Array4<F>, store_input: bool) -> Result<(Array4<F>, CpCache<F>)> {
        self.check_input(fmap)?;
        let act = relu(&self.conv.forward(fmap));
        let (y, pool) = adaptive_max_pool2d(&act, (self.out_dims.1, self.out_dims.2));
        Ok((
            y,
            CpCache {
                x: store_input.then(|| fmap.clone()),
                pre_pool: act,
                pool,
            },
        ))
    }

    fn backward(&self, cache: &CpCache<F>, gout: &Array4<F>, grads: Option<&mut Conv2dGrads<F>>) -> Array4<F> {
        let d_act = max_pool2d_backward(&cache.pool, gout);
        let d_conv = relu_backward(&cache.pre_pool, &d_act);
        match grads {
            Some(g) => self.conv.backward(cache.x.as_ref().expect("input cache"), &d_conv, Some(g)),
            None => self.conv.backward_input((self.in_dims.1, self.in_dims.2), &d_conv),
        }
    }

    pub fn param_count(&self) -> usize {
        self.conv.param_count()
    }
}

/// The sentence: one word vector per tap, shaped (batch, L, c_L).
#[derive(Debug, Clone, PartialEq)]
pub struct Sentence<F> {
    pub words: Array3<F>,
}

impl<F: Real> Sentence<F> {
    pub fn batch_len(&self) -> usize {
        self.words.dim().0
    }

    pub fn word_count(&self) -> usize {
        self.words.dim().1
    }

    pub fn word_dim(&self) -> usize {
        self.words.dim().2
    }

    /// Flattened length per example is L * c_L.
    pub fn flat_len(&self) -> usize {
        self.word_count() * self.word_dim()
    }
}

#[derive(Debug, Clone)]
pub struct EmbeddingLayer<F> {
    pub cps: Vec<CpModule<F>>,
    pub dims: Vec<(usize, usize, usize)>,
}

pub struct EmbeddingCache<F> {
    chains: Vec<Vec<CpCache<F>>>,
    gap_in: (usize, usize, usize, usize),
}

pub type EmbeddingGrads<F> = Vec<Conv2dGrads<F>>;

impl<F: Real> EmbeddingLayer<F> {
    /// Build L-1 CP modules for an L-tap plan.
    pub fn init(plan: &TapPlan, seed: u64) -> Result<Self> {
        if plan.is_empty() {
            return Err(Error::InvalidConfig("plan has no taps".into()));
        }
        let mut rng = StdRng::seed_from_u64(seed);
        let mut cps = Vec::with_capacity(plan.len().saturating_sub(1));
        for i in 0..plan.len() - 1 {
            cps.push(CpModule::new(&mut rng, plan.dims[i], plan.dims[i + 1])?);
        }
        Ok(Self {
            cps,
            dims: plan.dims.clone(),
        })
    }

    pub fn word_count(&self) -> usize {
        self.dims.len()
    }

    pub fn word_dim(&self) -> usize {
        self.dims.last().expect("non-empty dims").0
    }

    fn check_series(&self, fs: &FeatureSeries<F>) -> Result<()> {
        if fs.maps.len() != self.dims.len() {
            return Err(Error::ShapeMismatch(format!(
                "series has {} maps, embedding expects {}",
                fs.maps.len(),
                self.dims.len()
            )));
        }
        let batch = fs.batch_len();
        for (i, (m, &(c, w, h))) in fs.maps.iter().zip(self.dims.iter()).enumerate() {
            if m.dim() != (batch, c, w, h) {
                return Err(Error::ShapeMismatch(format!(
                    "map {i} is {:?}, embedding expects ({batch}, {c}, {w}, {h})",
                    m.dim()
                )));
            }
        }
        Ok(())
    }

    /// Embed a feature series into a sentence.
    pub fn embed(&self, fs: &FeatureSeries<F>) -> Result<Sentence<F>> {
        self.check_series(fs)?;
        let batch = fs.batch_len();
        let l = self.word_count();
        let c_l = self.word_dim();
        let mut words = Array3::zeros((batch, l, c_l));
        for (wi, map) in fs.maps.iter().enumerate() {
            let mut cur = map.clone();
            for cp in &self.cps[wi..] {
                cur = cp.apply(&cur)?;
            }
            let pooled = gap(&cur);
            if !pooled.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("embedded word {wi}")));
            }
            words.slice_mut(s![.., wi, ..]).assign(&pooled);
        }
        Ok(Sentence { words })
    }

    /// Embed keeping per-word CP caches for the backward pass.
    pub fn embed_cached(
        &self,
        fs: &FeatureSeries<F>,
        store_input: bool,
    ) -> Result<(Sentence<F>, EmbeddingCache<F>)> {
        self.check_series(fs)?;
        let batch = fs.batch_len();
        let l = self.word_count();
        let c_l = self.word_dim();
        let (_, w_l, h_l) = *self.dims.last().unwrap();
        let mut words = Array3::zeros((batch, l, c_l));
        let mut chains = Vec::with_capacity(l);
        for (wi, map) in fs.maps.iter().enumerate() {
            let mut cur = map.clone();
            let mut chain = Vec::new();
            for cp in &self.cps[wi..] {
                let (y, cache) = cp.apply_cached(&cur, store_input)?;
                chain.push(cache);
                cur = y;
            }
            words.slice_mut(s![.., wi, ..]).assign(&gap(&cur));
            chains.push(chain);
        }
        Ok((
            Sentence { words },
            EmbeddingCache {
                chains,
                gap_in: (batch, c_l, w_l, h_l),
            },
        ))
    }

    /// Backward from sentence gradients. CP parameter gradients accumulate
    /// across every word that reuses a module. Returns per-tap feature-map
    /// gradients when requested.
    pub fn backward(
        &self,
        cache: &EmbeddingCache<F>,
        dwords: &Array3<F>,
        mut grads: Option<&mut EmbeddingGrads<F>>,
        want_map_grads: bool,
    ) -> Option<Vec<Array4<F>>> {
        let l = self.word_count();
        let mut map_grads = want_map_grads.then(|| Vec::with_capacity(l));
        for wi in 0..l {
            let dword = dwords.slice(s![.., wi, ..]).to_owned();
            let mut d = gap_backward(cache.gap_in, &dword);
            let first_cp = wi;
            for (ci, cp_cache) in cache.chains[wi].iter().enumerate().rev() {
                let cp_idx = first_cp + ci;
                let g = grads.as_mut().map(|g| &mut g[cp_idx]);
                d = self.cps[cp_idx].backward(cp_cache, &d, g);
            }
            if let Some(mg) = map_grads.as_mut() {
                mg.push(d);
            }
        }
        map_grads
    }

    pub fn zero_grads(&self) -> EmbeddingGrads<F> {
        self.cps.iter().map(|cp| cp.conv.zero_grads()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.cps.iter().map(|cp| cp.param_count()).sum()
    }

    pub fn param_views(&self) -> Vec<ArrayViewD<'_, F>> {
        let mut v = Vec::new();
        for cp in &self.cps {
            v.push(cp.conv.weight.view().into_dyn());
            v.push(cp.conv.bias.as_ref().expect("cp bias").view().into_dyn());
        }
        v
    }

    pub fn param_views_mut(&mut self) -> Vec<ArrayViewMutD<'_, F>> {
        let mut v = Vec::new();
        for cp in &mut self.cps {
            v.push(cp.conv.weight.view_mut().into_dyn());
            v.push(cp.conv.bias.as_mut().expect("cp bias").view_mut().into_dyn());
        }
        v
    }

    pub fn grad_views<'a>(grads: &'a EmbeddingGrads<F>) -> Vec<ArrayViewD<'a, F>> {
        let mut v = Vec::new();
        for g in grads {
            v.push(g.weight.view().into_dyn());
            v.push(g.bias.as_ref().expect("cp bias grad").view().into_dyn());
        }
        v
    }

    pub fn state_views(&self) -> Vec<(String, ArrayViewD<'_, F>)> {
        let mut v = Vec::new();
        for (i, cp) in self.cps.iter().enumerate() {
            v.push((format!("cp{i}.weight"), cp.conv.weight.view().into_dyn()));
            v.push((format!("cp{i}.bias"), cp.conv.bias.as_ref().unwrap().view().into_dyn()));
        }
        v
    }

    pub fn state_views_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, F>)> {
        let mut v = Vec::new();
        for (i, cp) in self.cps.iter_mut().enumerate() {
            v.push((format!("cp{i}.weight"), cp.conv.weight.view_mut().into_dyn()));
            v.push((format!("cp{i}.bias"), cp.conv.bias.as_mut().unwrap().view_mut().into_dyn()));
        }
        v
    }
}

fn gap<F: Real>(x: &Array4<F>) -> Array2<F> {
    featsent_nn::pool::global_avg_pool(x)
}

fn gap_backward<F: Real>(in_dim: (usize, usize, usize, usize), gout: &Array2<F>) -> Array4<F> {
    featsent_nn::pool::global_avg_pool_backward(in_dim, gout)
}

/// Global average pooling of raw classifier maps, used for the
/// classifier-side word diagnostics.
pub fn raw_words<F: Real>(map: &Array4<F>) -> Array2<F> {
    gap(map)
}

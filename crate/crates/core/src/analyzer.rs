//! Sentiment analyzer: banks of 1-D n-gram convolutional kernels over
//! the sentence, global max pooling per kernel, dropout, and a
//! two-logit fully-connected head. Positive sentiment means the input
//! is adversarial.

use ndarray::{linalg::general_mat_mul, s, Array1, Array2, Array3, ArrayViewD, ArrayViewMutD};
use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use featsent_nn::dropout::{dropout, dropout_backward};
use featsent_nn::init::he_uniform_3d;
use featsent_nn::linear::{Linear, LinearGrads};
use featsent_nn::loss::softmax;
use featsent_nn::Real;

use crate::embedding::Sentence;
use crate::error::{Error, Result};

pub const BENIGN: usize = 0;
pub const ADVERSARIAL: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzerConfig {
    pub gram_set: Vec<usize>,
    pub instances_per_gram: usize,
    pub word_dim: usize,
    pub words_per_sentence: usize,
    pub dropout_rate: f64,
}

impl AnalyzerConfig {
    pub fn new(gram_set: Vec<usize>, instances_per_gram: usize, word_dim: usize, words_per_sentence: usize, dropout_rate: f64) -> Self {
        Self {
            gram_set,
            instances_per_gram,
            word_dim,
            words_per_sentence,
            dropout_rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gram_set.is_empty() {
            return Err(Error::InvalidConfig("gram set must be non-empty".into()));
        }
        let mut sorted = self.gram_set.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.gram_set.len() {
            return Err(Error::InvalidConfig("gram set has duplicates".into()));
        }
        if sorted.iter().any(|&n| n == 0) {
            return Err(Error::InvalidConfig("gram sizes must be positive".into()));
        }
        if let Some(&max) = sorted.last() {
            if max > self.words_per_sentence {
                return Err(Error::InvalidConfig(format!(
                    "{max}-gram kernel larger than the {}-word sentence",
                    self.words_per_sentence
                )));
            }
        }
        if self.instances_per_gram == 0 {
            return Err(Error::InvalidConfig("instances per gram must be positive".into()));
        }
        if self.word_dim == 0 {
            return Err(Error::InvalidConfig("word dim must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidConfig("dropout rate must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Width of the pooled feature vector feeding the head.
    pub fn pooled_width(&self) -> usize {
        self.instances_per_gram * self.gram_set.len()
    }
}

/// M instances of an n-gram kernel: (M, n, c_L) weights plus per-kernel
/// bias.
#[derive(Debug, Clone)]
pub struct GramBank<F> {
    pub n: usize,
    pub kernels: Array3<F>,
    pub bias: Array1<F>,
}

#[derive(Debug, Clone)]
pub struct SentimentAnalyzer<F> {
    pub cfg: AnalyzerConfig,
    pub banks: Vec<GramBank<F>>,
    pub fc: Linear<F>,
}

pub struct AnalyzerCache<F> {
    sentence: Array3<F>,
    /// Per bank: post-ReLU activations (batch, M, positions).
    acts: Vec<Array3<F>>,
    /// Per bank: argmax position per (batch, kernel).
    argmax: Vec<Array2<usize>>,
    /// Pooled vector after dropout, the fully-connected input.
    fc_in: Array2<F>,
    mask: Option<Array2<F>>,
}

#[derive(Debug, Clone)]
pub struct AnalyzerGrads<F> {
    pub banks: Vec<(Array3<F>, Array1<F>)>,
    pub fc: LinearGrads<F>,
}

impl<F: Real> SentimentAnalyzer<F> {
    pub fn init(cfg: AnalyzerConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = StdRng::seed_from_u64(seed);
        let mut gram_set = cfg.gram_set.clone();
        gram_set.sort_unstable();
        let cfg = AnalyzerConfig { gram_set, ..cfg };
        let banks = cfg
            .gram_set
            .iter()
            .map(|&n| GramBank {
                n,
                kernels: he_uniform_3d(&mut rng, (cfg.instances_per_gram, n, cfg.word_dim)),
                bias: Array1::zeros(cfg.instances_per_gram),
            })
            .collect();
        let fc = Linear::new(&mut rng, cfg.pooled_width(), 2);
        Ok(Self { cfg, banks, fc })
    }

    fn check_sentence(&self, s: &Sentence<F>) -> Result<()> {
        if s.word_count() != self.cfg.words_per_sentence || s.word_dim() != self.cfg.word_dim {
            return Err(Error::ShapeMismatch(format!(
                "sentence ({}, {}) does not match analyzer ({}, {})",
                s.word_count(),
                s.word_dim(),
                self.cfg.words_per_sentence,
                self.cfg.word_dim
            )));
        }
        if !s.words.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("sentence".into()));
        }
        Ok(())
    }

    /// Logits for a batch of sentences. Dropout is active only when
    /// `inference` is false; `rng` is required then.
    pub fn forward_cached(
        &self,
        sentence: &Sentence<F>,
        inference: bool,
        rng: Option<&mut StdRng>,
    ) -> Result<(Array2<F>, AnalyzerCache<F>)> {
        self.check_sentence(sentence)?;
        let batch = sentence.batch_len();
        let l = self.cfg.words_per_sentence;
        let m = self.cfg.instances_per_gram;
        let mut pooled = Array2::zeros((batch, self.cfg.pooled_width()));
        let mut acts = Vec::with_capacity(self.banks.len());
        let mut argmax = Vec::with_capacity(self.banks.len());
        for (bi, bank) in self.banks.iter().enumerate() {
            let positions = l - bank.n + 1;
            let kmat = bank
                .kernels
                .view()
                .into_shape_with_order((m, bank.n * self.cfg.word_dim))
                .expect("kernels contiguous");
            let mut act = Array3::zeros((batch, m, positions));
            for p in 0..positions {
                let window = sentence
                    .words
                    .slice(s![.., p..p + bank.n, ..])
                    .to_owned()
                    .into_shape_with_order((batch, bank.n * self.cfg.word_dim))
                    .expect("window contiguous");
                let mut scores = Array2::zeros((batch, m));
                general_mat_mul(F::one(), &window, &kmat.t(), F::zero(), &mut scores);
                for mut row in scores.outer_iter_mut() {
                    row += &bank.bias;
                }
                act.slice_mut(s![.., .., p]).assign(&scores);
            }
            act.mapv_inplace(|v| if v > F::zero() { v } else { F::zero() });
            let mut arg = Array2::zeros((batch, m));
            for b in 0..batch {
                for k in 0..m {
                    let lane = act.slice(s![b, k, ..]);
                    let mut best = 0usize;
                    for (p, v) in lane.iter().enumerate() {
                        if *v > lane[best] {
                            best = p;
                        }
                    }
                    arg[[b, k]] = best;
                    pooled[[b, bi * m + k]] = lane[best];
                }
            }
            acts.push(act);
            argmax.push(arg);
        }
        let (fc_in, mask) = if inference {
            (pooled, None)
        } else {
            let rng = rng.expect("training mode needs a dropout rng");
            let (dropped, mask) = dropout(&pooled, self.cfg.dropout_rate, rng);
            (dropped, Some(mask))
        };
        let logits = self.fc.forward(&fc_in);
        Ok((
            logits,
            AnalyzerCache {
                sentence: sentence.words.clone(),
                acts,
                argmax,
                fc_in,
                mask,
            },
        ))
    }

    /// Probability pairs (benign, adversarial) per example.
    pub fn analyze(&self, sentence: &Sentence<F>, inference: bool, rng: Option<&mut StdRng>) -> Result<Array2<F>> {
        let (logits, _) = self.forward_cached(sentence, inference, rng)?;
        Ok(softmax(&logits))
    }

    /// Backward from logits gradients; returns the sentence gradient when
    /// requested.
    pub fn backward(
        &self,
        cache: &AnalyzerCache<F>,
        dlogits: &Array2<F>,
        mut grads: Option<&mut AnalyzerGrads<F>>,
        want_dsentence: bool,
    ) -> Option<Array3<F>> {
        let batch = cache.sentence.dim().0;
        let m = self.cfg.instances_per_gram;
        let mut dpooled = self
            .fc
            .backward(&cache.fc_in, dlogits, grads.as_mut().map(|g| &mut g.fc));
        if let Some(mask) = &cache.mask {
            dpooled = dropout_backward(mask, &dpooled);
        }
        let mut dsent = want_dsentence.then(|| Array3::zeros(cache.sentence.raw_dim()));
        for (bi, bank) in self.banks.iter().enumerate() {
            for b in 0..batch {
                for k in 0..m {
                    let p = cache.argmax[bi][[b, k]];
                    // ReLU gate at the pooled activation.
                    if cache.acts[bi][[b, k, p]] <= F::zero() {
                        continue;
                    }
                    let g = dpooled[[b, bi * m + k]];
                    if g == F::zero() {
                        continue;
                    }
                    if let Some(gr) = grads.as_mut() {
                        let (dk, db) = &mut gr.banks[bi];
                        let window = cache.sentence.slice(s![b, p..p + bank.n, ..]);
                        let mut dkk = dk.slice_mut(s![k, .., ..]);
                        dkk.scaled_add(g, &window);
                        db[k] += g;
                    }
                    if let Some(ds) = dsent.as_mut() {
                        let kernel = bank.kernels.slice(s![k, .., ..]);
                        let mut dw = ds.slice_mut(s![b, p..p + bank.n, ..]);
                        dw.scaled_add(g, &kernel);
                    }
                }
            }
        }
        dsent
    }

    pub fn zero_grads(&self) -> AnalyzerGrads<F> {
        AnalyzerGrads {
            banks: self
                .banks
                .iter()
                .map(|b| (Array3::zeros(b.kernels.raw_dim()), Array1::zeros(b.bias.raw_dim())))
                .collect(),
            fc: self.fc.zero_grads(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.banks
            .iter()
            .map(|b| b.kernels.len() + b.bias.len())
            .sum::<usize>()
            + self.fc.param_count()
    }

    pub fn param_views(&self) -> Vec<ArrayViewD<'_, F>> {
        let mut v = Vec::new();
        for b in &self.banks {
            v.push(b.kernels.view().into_dyn());
            v.push(b.bias.view().into_dyn());
        }
        v.push(self.fc.weight.view().into_dyn());
        v.push(self.fc.bias.view().into_dyn());
        v
    }

    pub fn param_views_mut(&mut self) -> Vec<ArrayViewMutD<'_, F>> {
        let mut v = Vec::new();
        for b in &mut self.banks {
            v.push(b.kernels.view_mut().into_dyn());
            v.push(b.bias.view_mut().into_dyn());
        }
        v.push(self.fc.weight.view_mut().into_dyn());
        v.push(self.fc.bias.view_mut().into_dyn());
        v
    }

    pub fn grad_views<'a>(grads: &'a AnalyzerGrads<F>) -> Vec<ArrayViewD<'a, F>> {
        let mut v = Vec::new();
        for (k, b) in &grads.banks {
            v.push(k.view().into_dyn());
            v.push(b.view().into_dyn());
        }
        v.push(grads.fc.weight.view().into_dyn());
        v.push(grads.fc.bias.view().into_dyn());
        v
    }

    pub fn state_views(&self) -> Vec<(String, ArrayViewD<'_, F>)> {
        let mut v = Vec::new();
        for b in &self.banks {
            v.push((format!("gram{}.kernels", b.n), b.kernels.view().into_dyn()));
            v.push((format!("gram{}.bias", b.n), b.bias.view().into_dyn()));
        }
        v.push(("fc.weight".into(), self.fc.weight.view().into_dyn()));
        v.push(("fc.bias".into(), self.fc.bias.view().into_dyn()));
        v
    }

    pub fn state_views_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, F>)> {
        let mut v = Vec::new();
        for b in &mut self.banks {
            let n = b.n;
            v.push((format!("gram{n}.kernels"), b.kernels.view_mut().into_dyn()));
            v.push((format!("gram{n}.bias"), b.bias.view_mut().into_dyn()));
        }
        v.push(("fc.weight".into(), self.fc.weight.view_mut().into_dyn()));
        v.push(("fc.bias".into(), self.fc.bias.view_mut().into_dyn()));
        v
    }
}

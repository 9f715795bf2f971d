//! The detector: word embedding layer composed with the sentiment
//! analyzer, plus checkpointing and the gradient path used by
//! detector-aware attacks.

use std::path::Path;

use ndarray::{Array1, Array2, Array4, ArrayViewD, ArrayViewMutD};
use serde::{Deserialize, Serialize};

use featsent_nn::Real;

use crate::analyzer::{AnalyzerConfig, SentimentAnalyzer};
use crate::classifier::{FeatureSeries, TapPlan};
use crate::embedding::{EmbeddingLayer, Sentence};
use crate::error::{Error, Result};
use crate::provenance::{derive_seed, short_hash, ContentHasher};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionScore<F> {
    pub p_benign: F,
    pub p_adversarial: F,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DetectorMeta {
    pub trained_against: Option<String>,
    pub seed: u64,
    pub epochs_trained: usize,
    /// Attack ids seen across initial training and fine-tuning.
    pub lineage: Vec<String>,
    pub classifier_hash: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Detector<F> {
    pub embedding: EmbeddingLayer<F>,
    pub analyzer: SentimentAnalyzer<F>,
    pub plan: TapPlan,
    pub meta: DetectorMeta,
}

impl<F: Real> Detector<F> {
    /// Build a detector for a tap plan. The analyzer's word dimension and
    /// sentence length come from the plan.
    pub fn new(plan: TapPlan, gram_set: Vec<usize>, instances_per_gram: usize, dropout_rate: f64, seed: u64) -> Result<Self> {
        let embedding = EmbeddingLayer::init(&plan, derive_seed(seed, "embedding"))?;
        let cfg = AnalyzerConfig::new(
            gram_set,
            instances_per_gram,
            embedding.word_dim(),
            embedding.word_count(),
            dropout_rate,
        );
        let analyzer = SentimentAnalyzer::init(cfg, derive_seed(seed, "analyzer"))?;
        Ok(Self {
            embedding,
            analyzer,
            plan,
            meta: DetectorMeta {
                seed,
                ..DetectorMeta::default()
            },
        })
    }

    fn check_series(&self, fs: &FeatureSeries<F>) -> Result<()> {
        fs.validate(&self.plan)
    }

    /// Inference-mode probability pairs per example.
    pub fn detect(&self, fs: &FeatureSeries<F>) -> Result<Vec<DetectionScore<F>>> {
        self.check_series(fs)?;
        let sentence = self.embedding.embed(fs)?;
        let probs = self.analyzer.analyze(&sentence, true, None)?;
        Ok(probs
            .outer_iter()
            .map(|row| DetectionScore {
                p_benign: row[0],
                p_adversarial: row[1],
            })
            .collect())
    }

    /// Adversarial-class probability per example.
    pub fn p_adversarial(&self, fs: &FeatureSeries<F>) -> Result<Array1<F>> {
        Ok(Array1::from_vec(
            self.detect(fs)?.iter().map(|s| s.p_adversarial).collect(),
        ))
    }

    /// Embed-and-analyze in one pass for callers that already did shape
    /// checks (training loop).
    pub fn sentence(&self, fs: &FeatureSeries<F>) -> Result<Sentence<F>> {
        self.embedding.embed(fs)
    }

    /// Gradient of a loss on the detector logits with respect to every
    /// tapped feature map; used by detector-aware attacks. Inference mode
    /// (no dropout).
    pub fn logits_with_map_backprop(
        &self,
        fs: &FeatureSeries<F>,
    ) -> Result<(Array2<F>, impl Fn(&Array2<F>) -> Vec<Array4<F>> + '_)> {
        self.check_series(fs)?;
        let (sentence, emb_cache) = self.embedding.embed_cached(fs, false)?;
        let (logits, an_cache) = self.analyzer.forward_cached(&sentence, true, None)?;
        let back = move |dlogits: &Array2<F>| -> Vec<Array4<F>> {
            let dsent = self
                .analyzer
                .backward(&an_cache, dlogits, None, true)
                .expect("sentence gradient requested");
            self.embedding
                .backward(&emb_cache, &dsent, None, true)
                .expect("map gradients requested")
        };
        Ok((logits, back))
    }

    /// Exact learnable-scalar count by enumerating parameter arrays.
    pub fn param_count(&self) -> usize {
        self.embedding.param_count() + self.analyzer.param_count()
    }

    /// Closed form: sum over CP modules of 9*c_i*c_{i+1} + c_{i+1}, plus
    /// per-gram kernel banks M*(n*c_L + 1), plus the two-logit head.
    pub fn param_count_closed_form(&self) -> usize {
        let dims = &self.plan.dims;
        let cp: usize = (0..dims.len().saturating_sub(1))
            .map(|i| 9 * dims[i].0 * dims[i + 1].0 + dims[i + 1].0)
            .sum();
        let c_l = dims.last().expect("non-empty plan").0;
        let m = self.analyzer.cfg.instances_per_gram;
        let grams: usize = self
            .analyzer
            .cfg
            .gram_set
            .iter()
            .map(|&n| m * (n * c_l + 1))
            .sum();
        let head = m * self.analyzer.cfg.gram_set.len() * 2 + 2;
        cp + grams + head
    }

    pub fn param_views(&self) -> Vec<ArrayViewD<'_, F>> {
        let mut v = self.embedding.param_views();
        v.extend(self.analyzer.param_views());
        v
    }

    pub fn param_views_mut(&mut self) -> Vec<ArrayViewMutD<'_, F>> {
        let Self { embedding, analyzer, .. } = self;
        let mut v = embedding.param_views_mut();
        v.extend(analyzer.param_views_mut());
        v
    }

    pub fn state_views(&self) -> Vec<(String, ArrayViewD<'_, F>)> {
        let mut v: Vec<(String, ArrayViewD<'_, F>)> = self
            .embedding
            .state_views()
            .into_iter()
            .map(|(n, a)| (format!("embedding.{n}"), a))
            .collect();
        v.extend(
            self.analyzer
                .state_views()
                .into_iter()
                .map(|(n, a)| (format!("analyzer.{n}"), a)),
        );
        v
    }

    pub fn state_views_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, F>)> {
        let Self { embedding, analyzer, .. } = self;
        let mut v: Vec<(String, ArrayViewMutD<'_, F>)> = embedding
            .state_views_mut()
            .into_iter()
            .map(|(n, a)| (format!("embedding.{n}"), a))
            .collect();
        v.extend(
            analyzer
                .state_views_mut()
                .into_iter()
                .map(|(n, a)| (format!("analyzer.{n}"), a)),
        );
        v
    }

    pub fn state_hash(&self) -> String {
        let mut h = ContentHasher::new();
        for (name, view) in self.state_views() {
            h.update_bytes(name.as_bytes());
            h.update_array(&view);
        }
        h.finish()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DetectorManifestFile {
    plan: TapPlan,
    analyzer: AnalyzerConfig,
    meta: DetectorMeta,
    arrays: Vec<(String, Vec<usize>)>,
    checkpoint_hash: String,
    config_hash: String,
}

pub fn save_detector<F: Real>(dir: &Path, detector: &Detector<F>, config_hash: &str) -> Result<String> {
    std::fs::create_dir_all(dir)?;
    let state = detector.state_views();
    let mut bytes = Vec::new();
    let mut arrays = Vec::with_capacity(state.len());
    for (name, view) in &state {
        arrays.push((name.clone(), view.shape().to_vec()));
        for v in view.iter() {
            bytes.extend_from_slice(&v.as_f32().to_le_bytes());
        }
    }
    std::fs::write(dir.join("params.bin"), &bytes)?;
    let manifest = DetectorManifestFile {
        plan: detector.plan.clone(),
        analyzer: detector.analyzer.cfg.clone(),
        meta: detector.meta.clone(),
        arrays,
        checkpoint_hash: short_hash(&bytes),
        config_hash: config_hash.to_string(),
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest.checkpoint_hash)
}

pub fn load_detector<F: Real>(dir: &Path) -> Result<Detector<F>> {
    let manifest: DetectorManifestFile =
        serde_json::from_slice(&std::fs::read(dir.join("manifest.json"))?)?;
    let bytes = std::fs::read(dir.join("params.bin"))?;
    if short_hash(&bytes) != manifest.checkpoint_hash {
        return Err(Error::Checkpoint(format!(
            "{} params.bin does not match its manifest hash",
            dir.display()
        )));
    }
    let mut detector = Detector::<F>::new(
        manifest.plan,
        manifest.analyzer.gram_set.clone(),
        manifest.analyzer.instances_per_gram,
        manifest.analyzer.dropout_rate,
        manifest.meta.seed,
    )?;
    detector.meta = manifest.meta;
    let mut offset = 0usize;
    for ((name, mut view), (mname, mshape)) in
        detector.state_views_mut().into_iter().zip(manifest.arrays.iter())
    {
        if &name != mname || view.shape() != mshape.as_slice() {
            return Err(Error::Checkpoint(format!(
                "array {name} does not match manifest entry {mname}"
            )));
        }
        for v in view.iter_mut() {
            let raw = f32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap());
            *v = F::c(raw as f64);
            offset += 4;
        }
    }
    if offset != bytes.len() {
        return Err(Error::Checkpoint("params.bin length mismatch".into()));
    }
    Ok(detector)
}

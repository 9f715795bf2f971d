//! Declarative experiment configuration. A single TOML (or JSON) file
//! fully determines every derived artifact through its canonical hash.
//! Unknown keys are rejected so typos cannot silently change a run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use featsent_core::attacks::{AttackParams, AttackSpec, DecisionRule};
use featsent_core::classifier::Architecture;
use featsent_core::data::SplitSizes;
use featsent_core::provenance::{derive_seed, short_hash};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    #[serde(default = "default_data_root")]
    pub root: PathBuf,
    #[serde(default)]
    pub subset: Option<usize>,
    #[serde(default)]
    pub splits: Option<SplitConfig>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitConfig {
    pub fn to_sizes(self) -> SplitSizes {
        SplitSizes {
            train: self.train,
            val: self.val,
            test: self.test,
        }
    }
}

fn default_data_root() -> PathBuf {
    PathBuf::from("data")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierConfig {
    #[serde(default = "default_architecture")]
    pub architecture: Architecture,
    #[serde(default = "default_num_classes")]
    pub num_classes: usize,
    #[serde(default = "default_input_shape")]
    pub input_shape: (usize, usize, usize),
    #[serde(default = "default_classifier_epochs")]
    pub epochs: usize,
    #[serde(default = "default_classifier_lr")]
    pub lr: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            architecture: default_architecture(),
            num_classes: default_num_classes(),
            input_shape: default_input_shape(),
            epochs: default_classifier_epochs(),
            lr: default_classifier_lr(),
            batch_size: default_batch_size(),
        }
    }
}

fn default_architecture() -> Architecture {
    Architecture::Tinycnn
}
fn default_num_classes() -> usize {
    10
}
fn default_input_shape() -> (usize, usize, usize) {
    (3, 32, 32)
}
fn default_classifier_epochs() -> usize {
    10
}
fn default_classifier_lr() -> f64 {
    1e-3
}
fn default_batch_size() -> usize {
    128
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TapConfig {
    /// Defaults to every named block of the architecture.
    #[serde(default)]
    pub layers: Option<Vec<String>>,
}

/// One attack entry; optional fields default to the published settings
/// for that attack.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackEntry {
    pub id: String,
    pub kind: String,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub eps_step: Option<f64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
    #[serde(default)]
    pub random_start: Option<bool>,
    #[serde(default)]
    pub overshoot: Option<f64>,
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub binary_search_steps: Option<usize>,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub stepsize: Option<f64>,
    #[serde(default)]
    pub confidence: Option<f64>,
    #[serde(default)]
    pub initial_const: Option<f64>,
    #[serde(default)]
    pub regularization: Option<f64>,
    #[serde(default)]
    pub initial_stepsize: Option<f64>,
    #[serde(default)]
    pub decision_rule: Option<String>,
    #[serde(default)]
    pub sigma: Option<f64>,
}

impl AttackEntry {
    pub fn to_params(&self) -> Result<AttackParams> {
        let need = |v: Option<f64>, field: &str| {
            v.ok_or_else(|| {
                CliError::Validation(format!("attack `{}` needs `{field}`", self.id))
            })
        };
        let params = match self.kind.as_str() {
            "fgsm" => AttackParams::Fgsm {
                eps: need(self.eps, "eps")?,
            },
            "pgd" => AttackParams::Pgd {
                eps: need(self.eps, "eps")?,
                eps_step: self.eps_step.unwrap_or(0.002),
                max_iter: self.max_iter.unwrap_or(10),
                random_start: self.random_start.unwrap_or(true),
            },
            "deepfool" => AttackParams::Deepfool {
                max_iter: self.max_iter.unwrap_or(50),
                overshoot: self.overshoot.unwrap_or(0.02),
            },
            "jsma" => AttackParams::Jsma {
                theta: self.theta.unwrap_or(1.0),
                gamma: self.gamma.unwrap_or(0.1),
            },
            "cw" => AttackParams::Cw {
                binary_search_steps: self.binary_search_steps.unwrap_or(5),
                steps: self.steps.unwrap_or(1000),
                stepsize: self.stepsize.unwrap_or(0.01),
                confidence: self.confidence.unwrap_or(0.8),
                initial_const: self.initial_const.unwrap_or(0.1),
            },
            "ead" => AttackParams::Ead {
                binary_search_steps: self.binary_search_steps.unwrap_or(9),
                steps: self.steps.unwrap_or(1000),
                confidence: self.confidence.unwrap_or(0.8),
                initial_const: self.initial_const.unwrap_or(0.1),
                regularization: self.regularization.unwrap_or(0.01),
                initial_stepsize: self.initial_stepsize.unwrap_or(0.01),
                decision_rule: match self.decision_rule.as_deref() {
                    None | Some("L1") | Some("l1") => DecisionRule::L1,
                    Some("EN") | Some("en") => DecisionRule::ElasticNet,
                    Some(other) => {
                        return Err(CliError::Validation(format!(
                            "attack `{}`: unknown decision_rule `{other}`",
                            self.id
                        )))
                    }
                },
            },
            "apgd_ce" => AttackParams::ApgdCe {
                eps: need(self.eps, "eps")?,
                max_iter: self.max_iter.unwrap_or(100),
            },
            "apgd_dlr" => AttackParams::ApgdDlr {
                eps: need(self.eps, "eps")?,
                max_iter: self.max_iter.unwrap_or(100),
            },
            "adaptive_alt" => AttackParams::AdaptiveAlt {
                eps: need(self.eps, "eps")?,
                eps_step: need(self.eps_step, "eps_step")?,
                max_iter: self.max_iter.unwrap_or(20),
                random_start: self.random_start.unwrap_or(true),
            },
            "adaptive_comb" => AttackParams::AdaptiveComb {
                eps: need(self.eps, "eps")?,
                eps_step: need(self.eps_step, "eps_step")?,
                max_iter: self.max_iter.unwrap_or(20),
                sigma: need(self.sigma, "sigma")?,
                random_start: self.random_start.unwrap_or(true),
            },
            other => {
                return Err(CliError::Validation(format!(
                    "attack `{}`: unknown kind `{other}`",
                    self.id
                )))
            }
        };
        params
            .validate()
            .map_err(|e| CliError::Validation(format!("attack `{}`: {e}", self.id)))?;
        Ok(params)
    }

    pub fn to_spec(&self, global_seed: u64) -> Result<AttackSpec> {
        Ok(AttackSpec {
            id: self.id.clone(),
            params: self.to_params()?,
            seed: derive_seed(global_seed, &format!("attack-{}", self.id)),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    #[serde(default = "default_gram_set")]
    pub gram_set: Vec<usize>,
    #[serde(default = "default_instances")]
    pub instances_per_gram: usize,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            gram_set: default_gram_set(),
            instances_per_gram: default_instances(),
            dropout: default_dropout(),
        }
    }
}

fn default_gram_set() -> Vec<usize> {
    vec![1, 2, 3, 4]
}
fn default_instances() -> usize {
    100
}
fn default_dropout() -> f64 {
    0.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorTrainingConfig {
    #[serde(default = "default_detector_epochs")]
    pub epochs: usize,
    #[serde(default = "default_detector_lr")]
    pub lr: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_true")]
    pub balance: bool,
    #[serde(default = "default_true")]
    pub cache_features: bool,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    /// How many train-split images to craft against.
    #[serde(default = "default_craft_train")]
    pub craft_train_count: usize,
    /// How many test-split images to craft against.
    #[serde(default = "default_craft_test")]
    pub craft_test_count: usize,
}

impl Default for DetectorTrainingConfig {
    fn default() -> Self {
        Self {
            epochs: default_detector_epochs(),
            lr: default_detector_lr(),
            batch_size: default_batch_size(),
            balance: true,
            cache_features: true,
            val_fraction: default_val_fraction(),
            craft_train_count: default_craft_train(),
            craft_test_count: default_craft_test(),
        }
    }
}

fn default_detector_epochs() -> usize {
    10
}
fn default_detector_lr() -> f64 {
    1e-4
}
fn default_true() -> bool {
    true
}
fn default_val_fraction() -> f64 {
    0.02
}
fn default_craft_train() -> usize {
    2000
}
fn default_craft_test() -> usize {
    600
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default = "default_latency_calls")]
    pub latency_calls: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            latency_calls: default_latency_calls(),
        }
    }
}

fn default_latency_calls() -> usize {
    100
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveConfig {
    /// Attack id whose detector is the adaptation target.
    #[serde(default)]
    pub base_attack: Option<String>,
    #[serde(default = "default_adaptive_eps")]
    pub eps: f64,
    #[serde(default = "default_adaptive_step")]
    pub eps_step: f64,
    #[serde(default = "default_adaptive_iters")]
    pub max_iter: usize,
    #[serde(default = "default_fine_tune_epochs")]
    pub fine_tune_epochs: usize,
    #[serde(default = "default_sigma_grid")]
    pub sigma_grid: Vec<f64>,
    /// Examples used for adaptive crafting and the sigma sweep.
    #[serde(default = "default_adaptive_count")]
    pub example_count: usize,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            base_attack: None,
            eps: default_adaptive_eps(),
            eps_step: default_adaptive_step(),
            max_iter: default_adaptive_iters(),
            fine_tune_epochs: default_fine_tune_epochs(),
            sigma_grid: default_sigma_grid(),
            example_count: default_adaptive_count(),
        }
    }
}

fn default_adaptive_eps() -> f64 {
    8.0 / 255.0
}
fn default_adaptive_step() -> f64 {
    2.0 / 255.0
}
fn default_adaptive_iters() -> usize {
    20
}
fn default_fine_tune_epochs() -> usize {
    5
}
fn default_sigma_grid() -> Vec<f64> {
    vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
}
fn default_adaptive_count() -> usize {
    400
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblateConfig {
    #[serde(default = "default_ablate_axis")]
    pub axis: String,
    /// Attack the ablation detectors train against.
    #[serde(default)]
    pub attack: Option<String>,
    #[serde(default)]
    pub epochs: Option<usize>,
    /// Explicit subsets; defaults depend on the axis.
    #[serde(default)]
    pub subsets: Option<Vec<Vec<String>>>,
}

impl Default for AblateConfig {
    fn default() -> Self {
        Self {
            axis: default_ablate_axis(),
            attack: None,
            epochs: None,
            subsets: None,
        }
    }
}

fn default_ablate_axis() -> String {
    "layers".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub deterministic: bool,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    #[serde(default)]
    pub taps: TapConfig,
    #[serde(rename = "attack")]
    pub attacks: Vec<AttackEntry>,
    #[serde(default)]
    pub detector: DetectorConfig,
    #[serde(default)]
    pub detector_training: DetectorTrainingConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub adaptive: AdaptiveConfig,
    #[serde(default)]
    pub ablate: AblateConfig,
}

fn default_seed() -> u64 {
    7
}

impl ExperimentConfig {
    /// Parse, default, and validate; TOML first, JSON accepted too.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)
                .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text)
                .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.attacks.is_empty() {
            return Err(CliError::Validation("at least one [[attack]] required".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for a in &self.attacks {
            if !seen.insert(a.id.clone()) {
                return Err(CliError::Validation(format!("duplicate attack id `{}`", a.id)));
            }
            a.to_params()?;
        }
        match self.dataset.name.as_str() {
            "cifar10" | "cifar100" | "svhn" | "synthetic" => {}
            other => {
                return Err(CliError::Validation(format!(
                    "dataset.name: unknown dataset `{other}`"
                )))
            }
        }
        if self.ablate.axis != "layers" && self.ablate.axis != "gram" {
            return Err(CliError::Validation(format!(
                "ablate.axis must be `layers` or `gram`, got `{}`",
                self.ablate.axis
            )));
        }
        Ok(())
    }

    /// Canonical hash of the resolved configuration.
    pub fn canonical_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        short_hash(&bytes)
    }

    /// Tap names: configured, or every named block of the architecture.
    pub fn tap_layers(&self) -> Vec<String> {
        match &self.taps.layers {
            Some(l) => l.clone(),
            None => self
                .classifier
                .architecture
                .tap_names()
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }

    pub fn component_seed(&self, label: &str) -> u64 {
        derive_seed(self.seed, label)
    }
}

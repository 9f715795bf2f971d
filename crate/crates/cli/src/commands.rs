//! Pipeline stages behind the command-line surface. Stages are
//! idempotent: completed outputs are returned as-is unless --force.

use std::collections::BTreeMap;

use ndarray::Array4;
use serde::{Deserialize, Serialize};

use featsent_core::attacks::{craft_dataset, AdversarialSet, AttackParams, AttackSpec};
use featsent_core::classifier::{
    build_classifier, load_classifier, save_classifier, train_classifier, Classifier,
    ClassifierSpec, TapPlan,
};
use featsent_core::data::{load_dataset, DataBundle};
use featsent_core::detector::{load_detector, save_detector, Detector};
use featsent_core::eval::{
    evaluate_detector, export_words, generalization_matrix, separability_report, EvalReport,
};
use featsent_core::trainer::{assemble, fine_tune, train, TrainRecipe};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::store::ArtifactStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    TrainClassifier,
    Craft,
    TrainDetector,
    Evaluate,
    Generalize,
    Diagnose,
    AdaptiveEval,
    Ablate,
    Verify,
}

impl Command {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "train-classifier" => Some(Command::TrainClassifier),
            "craft" => Some(Command::Craft),
            "train-detector" => Some(Command::TrainDetector),
            "evaluate" => Some(Command::Evaluate),
            "generalize" => Some(Command::Generalize),
            "diagnose" => Some(Command::Diagnose),
            "adaptive-eval" => Some(Command::AdaptiveEval),
            "ablate" => Some(Command::Ablate),
            "verify" => Some(Command::Verify),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub force: bool,
    pub csv: bool,
}

pub fn run_command(cmd: Command, store: &ArtifactStore, opts: &RunOptions) -> Result<()> {
    match cmd {
        Command::TrainClassifier => cmd_train_classifier(store, opts),
        Command::Craft => cmd_craft(store, opts),
        Command::TrainDetector => cmd_train_detector(store, opts),
        Command::Evaluate => cmd_evaluate(store, opts),
        Command::Generalize => cmd_generalize(store, opts),
        Command::Diagnose => cmd_diagnose(store, opts),
        Command::AdaptiveEval => cmd_adaptive_eval(store, opts),
        Command::Ablate => cmd_ablate(store, opts),
        Command::Verify => cmd_verify(store),
    }
}

fn load_data(cfg: &ExperimentConfig) -> Result<DataBundle<f32>> {
    Ok(load_dataset(
        &cfg.dataset.name,
        &cfg.dataset.root,
        cfg.dataset.subset,
        cfg.dataset.splits.map(|s| s.to_sizes()),
    )?)
}

fn classifier_spec(cfg: &ExperimentConfig) -> ClassifierSpec {
    ClassifierSpec {
        architecture: cfg.classifier.architecture,
        num_classes: cfg.classifier.num_classes,
        input_shape: cfg.classifier.input_shape,
    }
}

fn require_classifier(store: &ArtifactStore) -> Result<Classifier<f32>> {
    let dir = store.classifier_dir();
    store.require(&dir, "train-classifier")?;
    let (classifier, _) = load_classifier::<f32>(&dir)?;
    Ok(classifier)
}

fn plan_for(store: &ArtifactStore, classifier: &Classifier<f32>) -> Result<TapPlan> {
    let layers = store.config.tap_layers();
    let refs: Vec<&str> = layers.iter().map(|s| s.as_str()).collect();
    Ok(classifier.plan_taps(&refs)?)
}

fn require_adv(store: &ArtifactStore, id: &str, split: &str) -> Result<AdversarialSet<f32>> {
    let dir = store.adv_dir(id, split);
    store.require(&dir, "craft")?;
    Ok(AdversarialSet::load(&dir)?)
}

fn require_detector(store: &ArtifactStore, id: &str) -> Result<Detector<f32>> {
    let dir = store.detector_dir(id);
    store.require(&dir, "train-detector")?;
    Ok(load_detector(&dir)?)
}

fn recipe_for(store: &ArtifactStore, label: &str) -> TrainRecipe {
    let cfg = &store.config;
    TrainRecipe {
        epochs: cfg.detector_training.epochs,
        lr: cfg.detector_training.lr,
        batch_size: cfg.detector_training.batch_size,
        seed: cfg.component_seed(label),
        cache_features: cfg.detector_training.cache_features,
        val_fraction: cfg.detector_training.val_fraction,
    }
}

fn take_pool(images: &Array4<f32>, labels: &[usize], count: usize) -> (Array4<f32>, Vec<usize>) {
    let n = count.min(labels.len());
    let idx: Vec<usize> = (0..n).collect();
    (
        featsent_core::classifier::gather(images, &idx),
        labels[..n].to_vec(),
    )
}

fn cmd_train_classifier(store: &ArtifactStore, opts: &RunOptions) -> Result<()> {
    let dir = store.classifier_dir();
    if store.stage_done(&dir) && !opts.force {
        println!("train-classifier: cached checkpoint at {}", dir.display());
        return Ok(());
    }
    let cfg = &store.config;
    let data = load_data(cfg)?;
    let spec = classifier_spec(cfg);
    let mut classifier: Classifier<f32> =
        build_classifier(&spec, cfg.component_seed("classifier-init"))?;
    let history = train_classifier(
        &mut classifier,
        &data.train.images,
        &data.train.labels,
        &data.val.images,
        &data.val.labels,
        cfg.classifier.epochs,
        cfg.classifier.lr,
        cfg.classifier.batch_size,
        cfg.component_seed("classifier-train"),
    )?;
    save_classifier(
        &dir,
        &classifier,
        cfg.component_seed("classifier-init"),
        &data.train.fingerprint,
        &store.config_hash,
    )?;
    store.write_history("classifier", &history)?;
    store.mark_stage(&dir, "train-classifier")?;
    let last = history.last().expect("at least one epoch");
    println!(
        "train-classifier: {} epochs, val accuracy {:.4}",
        history.len(),
        last.val_accuracy
    );
    Ok(())
}

fn cmd_craft(store: &ArtifactStore, opts: &RunOptions) -> Result<()> {
    let cfg = &store.config;
    let classifier = require_classifier(store)?;
    let data = load_data(cfg)?;
    for entry in &cfg.attacks {
        let spec = entry.to_spec(cfg.seed)?;
        if spec.params.needs_detector() {
            println!("craft: `{}` is detector-aware; crafted by adaptive-eval", entry.id);
            continue;
        }
        for (split, images, labels, count) in [
            (
                "train",
                &data.train.images,
                &data.train.labels,
                cfg.detector_training.craft_train_count,
            ),
            (
                "test",
                &data.test.images,
                &data.test.labels,
                cfg.detector_training.craft_test_count,
            ),
        ] {
            let dir = store.adv_dir(&entry.id, split);
            if store.stage_done(&dir) && !opts.force {
                println!("craft: cached {}-{split}", entry.id);
                continue;
            }
            let (pool, pool_labels) = take_pool(images, labels, count);
            let split_spec = AttackSpec {
                seed: featsent_core::provenance::derive_seed(spec.seed, split),
                ..spec.clone()
            };
            let set = craft_dataset(&classifier, &split_spec, &pool, &pool_labels, None)?;
            set.save(&dir)?;
            store.mark_stage(&dir, "craft")?;
            println!(
                "craft: {}-{split}: {} examples, success rate {:.4}",
                entry.id,
                set.len(),
                set.success_rate()
            );
        }
    }
    Ok(())
}

fn cmd_train_detector(store: &ArtifactStore, opts: &RunOptions) -> Result<()> {
    let cfg = &store.config;
    let classifier = require_classifier(store)?;
    let plan = plan_for(store, &classifier)?;
    let data = load_data(cfg)?;
    for entry in &cfg.attacks {
        if entry.to_spec(cfg.seed)?.params.needs_detector() {
            continue;
        }
        let dir = store.detector_dir(&entry.id);
        if store.stage_done(&dir) && !opts.force {
            println!("train-detector: cached {}", entry.id);
            continue;
        }
        let adv = require_adv(store, &entry.id, "train")?;
        let (pool, pool_labels) = take_pool(
            &data.train.images,
            &data.train.labels,
            cfg.detector_training.craft_train_count,
        );
        let ds = assemble(
            &classifier,
            &pool,
            &pool_labels,
            &adv,
            cfg.detector_training.balance,
            cfg.detector_training.val_fraction,
        )?;
        let mut detector = Detector::new(
            plan.clone(),
            cfg.detector.gram_set.clone(),
            cfg.detector.instances_per_gram,
            cfg.detector.dropout,
            cfg.component_seed(&format!("detector-{}", entry.id)),
        )?;
        let recipe = recipe_for(store, &format!("detector-train-{}", entry.id));
        let history = train(&mut detector, &classifier, &ds, &recipe)?;
        save_detector(&dir, &detector, &store.config_hash)?;
        store.write_history(&format!("detector-{}", entry.id), &history)?;
        store.mark_stage(&dir, "train-detector")?;
        let last = history.last().expect("epochs >= 1");
        println!(
            "train-detector: {}: loss {:.4}, val AUC {:.4}",
            entry.id, last.train_loss, last.val_auc
        );
    }
    Ok(())
}

fn cmd_evaluate(store: &ArtifactStore, opts: &RunOptions) -> Result<()> {
    let cfg = &store.config;
    let classifier = require_classifier(store)?;
    let data = load_data(cfg)?;
    for entry in &cfg.attacks {
        if entry.to_spec(cfg.seed)?.params.needs_detector() {
            continue;
        }
        let name = format!("evaluate-{}", entry.id);
        if store.report_done(&name) && !opts.force {
            let cached: EvalReport = store.read_report(&name)?;
            println!(
                "evaluate: cached {}: AUC {:.4}, accuracy {:.4}",
                entry.id, cached.auc, cached.detection_accuracy
            );
            continue;
        }
        let detector = require_detector(store, &entry.id)?;
        let adv = require_adv(store, &entry.id, "test")?;
        let report = evaluate_detector(
            &detector,
            &classifier,
            &data.test.images,
            &data.test.labels,
            &adv,
            &store.config_hash,
            cfg.eval.latency_calls,
        )?;
        store.write_report(&name, &report)?;
        println!(
            "evaluate: {}: AUC {:.4}, accuracy {:.4}, attack success {:.4}, latency {:.3} ms",
            entry.id,
            report.auc,
            report.detection_accuracy,
            report.attack_success_rate,
            report.mean_latency_ms
        );
    }
    Ok(())
}

fn cmd_generalize(store: &ArtifactStore, opts: &RunOptions) -> Result<()> {
    let cfg = &store.config;
    let name = "generalize";
    if store.report_done(name) && !opts.force {
        println!("generalize: cached report");
        return Ok(());
    }
    let classifier = require_classifier(store)?;
    let data = load_data(cfg)?;
    let mut detectors = BTreeMap::new();
    let mut sets = BTreeMap::new();
    for entry in &cfg.attacks {
        if entry.to_spec(cfg.seed)?.params.needs_detector() {
            continue;
        }
        detectors.insert(entry.id.clone(), require_detector(store, &entry.id)?);
        sets.insert(entry.id.clone(), require_adv(store, &entry.id, "test")?);
    }
    let matrix = generalization_matrix(
        &detectors,
        &sets,
        &classifier,
        &data.test.images,
        &data.test.labels,
    )?;
    store.write_report(name, &matrix)?;
    for (i, train_id) in matrix.train_attacks.iter().enumerate() {
        let row: Vec<String> = matrix.auc[i].iter().map(|v| format!("{v:.4}")).collect();
        println!(
            "generalize: {train_id} -> [{}] avg {:.4}",
            row.join(", "),
            matrix.row_avg[i]
        );
    }
    Ok(())
}

fn cmd_diagnose(store: &ArtifactStore, opts: &RunOptions) -> Result<()> {
    let cfg = &store.config;
    let classifier = require_classifier(store)?;
    let data = load_data(cfg)?;
    for entry in &cfg.attacks {
        if entry.to_spec(cfg.seed)?.params.needs_detector() {
            continue;
        }
        let name = format!("diagnose-{}", entry.id);
        if store.report_done(&name) && !opts.force {
            println!("diagnose: cached {}", entry.id);
            continue;
        }
        let detector = require_detector(store, &entry.id)?;
        let adv = require_adv(store, &entry.id, "test")?;
        let (pool, _) = take_pool(
            &data.test.images,
            &data.test.labels,
            cfg.detector_training.craft_test_count,
        );
        let report = separability_report(&classifier, &detector, &pool, &adv)?;
        store.write_report(&name, &report)?;

        // Word export: benign pool then successful adversarial examples.
        let succ = adv.success_indices();
        let adv_images = featsent_core::classifier::gather(&adv.perturbed, &succ);
        let mut images = pool.clone();
        let mut labels = data.test.labels[..pool.dim().0].to_vec();
        let mut flags = vec![false; pool.dim().0];
        images = ndarray::concatenate(
            ndarray::Axis(0),
            &[images.view(), adv_images.view()],
        )
        .expect("same shapes");
        labels.extend(succ.iter().map(|&i| adv.true_labels[i]));
        flags.extend(std::iter::repeat(true).take(succ.len()));
        export_words(
            &detector,
            &classifier,
            &images,
            &labels,
            &flags,
            &store.export_dir(&format!("words-{}", entry.id)),
            &store.config_hash,
            opts.csv,
        )?;
        for (tap, (c, d)) in report
            .taps
            .iter()
            .zip(report.classifier_side.iter().zip(report.detector_side.iter()))
        {
            println!(
                "diagnose: {}: tap {tap}: classifier-side {:.4}, detector-side {:.4}",
                entry.id, c, d
            );
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdaptiveEpochRow {
    pub epoch: usize,
    pub attack_success_rate: f64,
    pub detection_accuracy: f64,
    pub auc: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SigmaRow {
    pub sigma: f64,
    pub attack_success_rate: f64,
    pub detection_accuracy: f64,
    pub auc: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdaptiveReport {
    pub base_attack: String,
    pub epochs: Vec<AdaptiveEpochRow>,
    pub sigma_sweep: Vec<SigmaRow>,
    pub config_hash: String,
}

/// Detection metrics of a detector against an adaptive set: accuracy on
/// the successful adversarial examples, and AUC against benign images.
fn adaptive_metrics(
    detector: &Detector<f32>,
    classifier: &Classifier<f32>,
    benign: &Array4<f32>,
    adv: &AdversarialSet<f32>,
) -> Result<(f64, f64)> {
    let succ = adv.success_indices();
    if succ.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let adv_images = featsent_core::classifier::gather(&adv.perturbed, &succ);
    let (_, adv_series) = classifier.forward_with_taps(&adv_images, &detector.plan)?;
    let p_adv = detector.p_adversarial(&adv_series)?;
    let detected = p_adv.iter().filter(|p| **p > 0.5).count();
    let accuracy = detected as f64 / succ.len() as f64;

    let k = succ.len().min(benign.dim().0);
    let idx: Vec<usize> = (0..k).collect();
    let benign_images = featsent_core::classifier::gather(benign, &idx);
    let (_, benign_series) = classifier.forward_with_taps(&benign_images, &detector.plan)?;
    let p_benign = detector.p_adversarial(&benign_series)?;
    let mut scores: Vec<f64> = p_benign.iter().map(|v| *v as f64).collect();
    let mut labels = vec![false; scores.len()];
    scores.extend(p_adv.iter().map(|v| *v as f64));
    labels.extend(std::iter::repeat(true).take(p_adv.len()));
    let auc = featsent_core::eval::roc_auc(&scores, &labels)?;
    Ok((accuracy, auc))
}

fn cmd_adaptive_eval(store: &ArtifactStore, opts: &RunOptions) -> Result<()> {
    let cfg = &store.config;
    let name = "adaptive";
    if store.report_done(name) && !opts.force {
        println!("adaptive-eval: cached report");
        return Ok(());
    }
    let classifier = require_classifier(store)?;
    let data = load_data(cfg)?;
    let base = match &cfg.adaptive.base_attack {
        Some(id) => id.clone(),
        None => cfg
            .attacks
            .iter()
            .find(|a| {
                a.to_params()
                    .map(|p| !p.needs_detector())
                    .unwrap_or(false)
            })
            .map(|a| a.id.clone())
            .ok_or_else(|| CliError::Validation("no base attack for adaptive-eval".into()))?,
    };
    let mut detector = require_detector(store, &base)?;
    let a = &cfg.adaptive;
    let (test_pool, test_labels) = take_pool(&data.test.images, &data.test.labels, a.example_count);
    let (train_pool, train_labels) =
        take_pool(&data.train.images, &data.train.labels, a.example_count);

    let alt_spec = |label: &str, seed_salt: &str| AttackSpec {
        id: label.to_string(),
        params: AttackParams::AdaptiveAlt {
            eps: a.eps,
            eps_step: a.eps_step,
            max_iter: a.max_iter,
            random_start: true,
        },
        seed: cfg.component_seed(seed_salt),
    };

    let mut rows = Vec::new();
    // Epoch 0: the pre-trained detector faces the adapted attack.
    let eval0 = craft_dataset(
        &classifier,
        &alt_spec("adaptive_alt", "adaptive-eval-0"),
        &test_pool,
        &test_labels,
        Some(&detector),
    )?;
    let (acc0, auc0) = adaptive_metrics(&detector, &classifier, &test_pool, &eval0)?;
    rows.push(AdaptiveEpochRow {
        epoch: 0,
        attack_success_rate: eval0.success_rate(),
        detection_accuracy: acc0,
        auc: auc0,
    });
    println!(
        "adaptive-eval: epoch 0: attack success {:.4}, detection accuracy {:.4}, AUC {:.4}",
        eval0.success_rate(),
        acc0,
        auc0
    );

    let recipe = recipe_for(store, "adaptive-fine-tune");
    for epoch in 1..=a.fine_tune_epochs {
        // The attacker re-adapts to the current detector; the detector
        // then fine-tunes on those fresh examples.
        let train_set = craft_dataset(
            &classifier,
            &alt_spec("adaptive_alt", &format!("adaptive-train-{epoch}")),
            &train_pool,
            &train_labels,
            Some(&detector),
        )?;
        fine_tune(
            &mut detector,
            &classifier,
            &train_set,
            &train_pool,
            &train_labels,
            1,
            &recipe,
        )?;
        let eval_set = craft_dataset(
            &classifier,
            &alt_spec("adaptive_alt", &format!("adaptive-eval-{epoch}")),
            &test_pool,
            &test_labels,
            Some(&detector),
        )?;
        let (acc, auc) = adaptive_metrics(&detector, &classifier, &test_pool, &eval_set)?;
        rows.push(AdaptiveEpochRow {
            epoch,
            attack_success_rate: eval_set.success_rate(),
            detection_accuracy: acc,
            auc,
        });
        println!(
            "adaptive-eval: epoch {epoch}: attack success {:.4}, detection accuracy {:.4}, AUC {:.4}",
            eval_set.success_rate(),
            acc,
            auc
        );
    }

    let mut sweep = Vec::new();
    for &sigma in &a.sigma_grid {
        let spec = AttackSpec {
            id: format!("adaptive_comb_{sigma}"),
            params: AttackParams::AdaptiveComb {
                eps: a.eps,
                eps_step: a.eps_step,
                max_iter: a.max_iter,
                sigma,
                random_start: true,
            },
            seed: cfg.component_seed(&format!("adaptive-sigma-{sigma}")),
        };
        let set = craft_dataset(&classifier, &spec, &test_pool, &test_labels, Some(&detector))?;
        let (acc, auc) = adaptive_metrics(&detector, &classifier, &test_pool, &set)?;
        sweep.push(SigmaRow {
            sigma,
            attack_success_rate: set.success_rate(),
            detection_accuracy: acc,
            auc,
        });
        println!(
            "adaptive-eval: sigma {:.1}: attack success {:.4}, detection accuracy {:.4}",
            sigma,
            set.success_rate(),
            acc
        );
    }

    let report = AdaptiveReport {
        base_attack: base.clone(),
        epochs: rows,
        sigma_sweep: sweep,
        config_hash: store.config_hash.clone(),
    };
    store.write_report(name, &report)?;
    let adapted_dir = store.detector_dir(&format!("{base}-adapted"));
    save_detector(&adapted_dir, &detector, &store.config_hash)?;
    store.mark_stage(&adapted_dir, "adaptive-eval")?;
    let _ = opts;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub subset: Vec<String>,
    pub auc: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationReport {
    pub axis: String,
    pub attack: String,
    pub rows: Vec<AblationRow>,
    pub config_hash: String,
}

fn default_layer_subsets(taps: &[String]) -> Vec<Vec<String>> {
    let mut subsets = vec![vec![featsent_core::classifier::INPUT_TAP.to_string()]];
    for t in taps {
        subsets.push(vec![t.clone()]);
    }
    for i in (0..taps.len().saturating_sub(1)).rev() {
        subsets.push(taps[i..].to_vec());
    }
    subsets
}

fn default_gram_subsets() -> Vec<Vec<String>> {
    [
        vec![1, 2],
        vec![1, 3],
        vec![1, 4],
        vec![2, 3],
        vec![2, 4],
        vec![3, 4],
        vec![1, 2, 3],
        vec![2, 3, 4],
        vec![1, 2, 3, 4],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(|n: i32| n.to_string()).collect())
    .collect()
}

fn cmd_ablate(store: &ArtifactStore, opts: &RunOptions) -> Result<()> {
    let cfg = &store.config;
    let axis = cfg.ablate.axis.clone();
    let name = format!("ablate-{axis}");
    if store.report_done(&name) && !opts.force {
        println!("ablate: cached {axis} report");
        return Ok(());
    }
    let classifier = require_classifier(store)?;
    let data = load_data(cfg)?;
    let attack_id = match &cfg.ablate.attack {
        Some(id) => id.clone(),
        None => cfg
            .attacks
            .iter()
            .find(|a| a.kind == "deepfool")
            .or_else(|| cfg.attacks.iter().find(|a| {
                a.to_params().map(|p| !p.needs_detector()).unwrap_or(false)
            }))
            .map(|a| a.id.clone())
            .ok_or_else(|| CliError::Validation("no attack available for ablate".into()))?,
    };
    let adv_train = require_adv(store, &attack_id, "train")?;
    let adv_test = require_adv(store, &attack_id, "test")?;
    let (pool, pool_labels) = take_pool(
        &data.train.images,
        &data.train.labels,
        cfg.detector_training.craft_train_count,
    );
    let epochs = cfg.ablate.epochs.unwrap_or(cfg.detector_training.epochs);

    let subsets: Vec<Vec<String>> = match (&cfg.ablate.subsets, axis.as_str()) {
        (Some(s), _) => s.clone(),
        (None, "layers") => default_layer_subsets(&cfg.tap_layers()),
        (None, _) => default_gram_subsets(),
    };

    let mut report_rows = Vec::with_capacity(subsets.len());
    for subset in &subsets {
        let (plan, gram_set) = match axis.as_str() {
            "layers" => {
                let refs: Vec<&str> = subset.iter().map(|s| s.as_str()).collect();
                (classifier.plan_taps(&refs)?, cfg.detector.gram_set.clone())
            }
            _ => {
                let grams: Vec<usize> = subset
                    .iter()
                    .map(|s| {
                        s.parse::<usize>().map_err(|_| {
                            CliError::Validation(format!("gram subset entry `{s}` is not a number"))
                        })
                    })
                    .collect::<Result<_>>()?;
                (plan_for(store, &classifier)?, grams)
            }
        };
        // Gram kernels cannot outspan the sentence.
        let max_gram = gram_set.iter().copied().max().unwrap_or(1);
        if max_gram > plan.len() {
            println!("ablate: skipping {subset:?} (gram {max_gram} > {} words)", plan.len());
            continue;
        }
        let ds = assemble(
            &classifier,
            &pool,
            &pool_labels,
            &adv_train,
            cfg.detector_training.balance,
            cfg.detector_training.val_fraction,
        )?;
        let mut detector = Detector::new(
            plan,
            gram_set,
            cfg.detector.instances_per_gram,
            cfg.detector.dropout,
            cfg.component_seed(&format!("ablate-{axis}-{}", subset.join("_"))),
        )?;
        let recipe = TrainRecipe {
            epochs,
            ..recipe_for(store, &format!("ablate-train-{axis}-{}", subset.join("_")))
        };
        train(&mut detector, &classifier, &ds, &recipe)?;
        let eval = evaluate_detector(
            &detector,
            &classifier,
            &data.test.images,
            &data.test.labels,
            &adv_test,
            &store.config_hash,
            cfg.eval.latency_calls,
        )?;
        println!("ablate: {axis} {subset:?}: AUC {:.4}", eval.auc);
        report_rows.push(AblationRow {
            subset: subset.clone(),
            auc: eval.auc,
        });
    }
    let report = AblationReport {
        axis,
        attack: attack_id,
        rows: report_rows,
        config_hash: store.config_hash.clone(),
    };
    store.write_report(&name, &report)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub ok: bool,
    pub issues: Vec<String>,
    pub artifacts_checked: usize,
}

fn cmd_verify(store: &ArtifactStore) -> Result<()> {
    let mut issues = Vec::new();
    let mut checked = 0usize;

    let classifier_dir = store.classifier_dir();
    let mut classifier_state_hash = None;
    if classifier_dir.join("manifest.json").exists() {
        checked += 1;
        match load_classifier::<f32>(&classifier_dir) {
            Ok((classifier, manifest)) => {
                if manifest.config_hash != store.config_hash {
                    issues.push(format!(
                        "classifier checkpoint built from config {} (store is {})",
                        manifest.config_hash, store.config_hash
                    ));
                }
                classifier_state_hash = Some(classifier.state_hash());
            }
            Err(e) => issues.push(format!("classifier checkpoint unreadable: {e}")),
        }
    }

    let adv_root = store.run_dir.join("adv_cache");
    if adv_root.is_dir() {
        for dirent in std::fs::read_dir(&adv_root)? {
            let dir = dirent?.path();
            if !dir.is_dir() {
                continue;
            }
            checked += 1;
            match AdversarialSet::<f32>::load(&dir) {
                Ok(set) => {
                    if let Some(h) = &classifier_state_hash {
                        if &set.classifier_hash != h {
                            issues.push(format!(
                                "{}: crafted against classifier {}, checkpoint is {}",
                                dir.display(),
                                set.classifier_hash,
                                h
                            ));
                        }
                    }
                    if let Err(e) = set.validate() {
                        issues.push(format!("{}: {e}", dir.display()));
                    }
                }
                Err(e) => issues.push(format!("{} unreadable: {e}", dir.display())),
            }
        }
    }

    let ck_root = store.run_dir.join("checkpoints");
    if ck_root.is_dir() {
        for dirent in std::fs::read_dir(&ck_root)? {
            let dir = dirent?.path();
            let name = dir.file_name().unwrap_or_default().to_string_lossy().to_string();
            if !name.starts_with("detector-") {
                continue;
            }
            checked += 1;
            match load_detector::<f32>(&dir) {
                Ok(det) => {
                    if let (Some(h), Some(dh)) = (&classifier_state_hash, &det.meta.classifier_hash)
                    {
                        if h != dh {
                            issues.push(format!(
                                "{}: trained against classifier {}, checkpoint is {}",
                                dir.display(),
                                dh,
                                h
                            ));
                        }
                    }
                }
                Err(e) => issues.push(format!("{} unreadable: {e}", dir.display())),
            }
        }
    }

    let report = VerifyReport {
        ok: issues.is_empty(),
        issues: issues.clone(),
        artifacts_checked: checked,
    };
    store.write_report("verify", &report)?;
    if report.ok {
        println!("verify: {checked} artifacts, provenance chain intact");
        Ok(())
    } else {
        for issue in &issues {
            eprintln!("verify: {issue}");
        }
        Err(CliError::Validation(format!(
            "verify found {} issues",
            issues.len()
        )))
    }
}

/// Artifact loaders shared with the acceptance suite.
pub fn load_adv(store: &ArtifactStore, id: &str, split: &str) -> Result<AdversarialSet<f32>> {
    require_adv(store, id, split)
}

pub fn load_detector_checkpoint(store: &ArtifactStore, id: &str) -> Result<Detector<f32>> {
    require_detector(store, id)
}

pub fn load_classifier_checkpoint(store: &ArtifactStore) -> Result<Classifier<f32>> {
    require_classifier(store)
}

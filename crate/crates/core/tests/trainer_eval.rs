//! Detector training and evaluation: balancing arithmetic, optimizer
//! smoke tests, seeded reproducibility, metric oracles, and report
//! plumbing.

use std::collections::BTreeMap;

use ndarray::Array4;
use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};

use featsent_core::analyzer::{ADVERSARIAL, BENIGN};
use featsent_core::attacks::{craft_dataset, AttackParams, AttackSpec};
use featsent_core::classifier::{build_classifier, Architecture, Classifier, ClassifierSpec};
use featsent_core::detector::Detector;
use featsent_core::error::Error;
use featsent_core::eval::{
    evaluate_detector, export_words, generalization_matrix, load_words, roc_auc,
    separability_report,
};
use featsent_core::trainer::{assemble, fine_tune, train, DetectorDataset, Split, TrainRecipe};

fn fixture() -> (Classifier<f32>, Detector<f32>, Array4<f32>, Vec<usize>) {
    let spec = ClassifierSpec {
        architecture: Architecture::Tinycnn,
        num_classes: 10,
        input_shape: (3, 8, 8),
    };
    let classifier: Classifier<f32> = build_classifier(&spec, 5).unwrap();
    let plan = classifier.plan_taps(&["B2", "B4"]).unwrap();
    let detector = Detector::new(plan, vec![1, 2], 8, 0.5, 6).unwrap();
    let mut rng = StdRng::seed_from_u64(44);
    let images = Array4::from_shape_simple_fn((120, 3, 8, 8), || rng.random_range(0.0f32..1.0));
    let labels: Vec<usize> = (0..120).map(|i| i % 10).collect();
    (classifier, detector, images, labels)
}

fn fgsm_set(
    classifier: &Classifier<f32>,
    images: &Array4<f32>,
    labels: &[usize],
    seed: u64,
) -> featsent_core::attacks::AdversarialSet<f32> {
    let spec = AttackSpec {
        id: "fgsm_0_3".into(),
        params: AttackParams::Fgsm { eps: 0.3 },
        seed,
    };
    craft_dataset(classifier, &spec, images, labels, None).unwrap()
}

#[test]
fn assemble_balances_and_checks_provenance() {
    let (classifier, _, images, labels) = fixture();
    let adv = fgsm_set(&classifier, &images, &labels, 1);
    let n_success = adv.success_count();
    assert!(n_success > 0);

    let ds = assemble(&classifier, &images, &labels, &adv, true, 0.0).unwrap();
    let benign = ds.labels.iter().filter(|&&l| l == BENIGN).count();
    let advn = ds.labels.iter().filter(|&&l| l == ADVERSARIAL).count();
    assert_eq!(benign, advn, "balanced 1:1");
    assert_eq!(ds.class_weights, (1.0, 1.0));

    let unbalanced = assemble(&classifier, &images, &labels, &adv, false, 0.0).unwrap();
    let advn2 = unbalanced.labels.iter().filter(|&&l| l == ADVERSARIAL).count();
    assert_eq!(advn2, n_success, "all successful examples retained");
    assert!(unbalanced.class_weights.0 > 0.0 && unbalanced.class_weights.1 > 0.0);

    // A different classifier invalidates the provenance hash.
    let other: Classifier<f32> = build_classifier(
        &ClassifierSpec {
            architecture: Architecture::Tinycnn,
            num_classes: 10,
            input_shape: (3, 8, 8),
        },
        99,
    )
    .unwrap();
    assert!(matches!(
        assemble(&other, &images, &labels, &adv, true, 0.0),
        Err(Error::Provenance(_))
    ));

    // Zero successes is an error.
    let mut no_success = adv.clone();
    no_success.success = vec![false; no_success.len()];
    assert!(matches!(
        assemble(&classifier, &images, &labels, &no_success, true, 0.0),
        Err(Error::Empty(_))
    ));
}

#[test]
fn overfit_one_batch_drives_loss_down() {
    let (classifier, base, _, _) = fixture();
    // Dropout off: the smoke test measures raw optimizer progress.
    let mut detector = Detector::new(base.plan.clone(), vec![1, 2], 8, 0.0, 6).unwrap();
    let mut rng = StdRng::seed_from_u64(91);
    let images = Array4::from_shape_simple_fn((200, 3, 8, 8), || rng.random_range(0.0f32..1.0));
    let labels: Vec<usize> = (0..200).map(|i| i % 10).collect();
    let spec = AttackSpec {
        id: "fgsm_half".into(),
        params: AttackParams::Fgsm { eps: 0.5 },
        seed: 2,
    };
    let adv = craft_dataset(&classifier, &spec, &images, &labels, None).unwrap();
    let mut ds = assemble(&classifier, &images, &labels, &adv, true, 0.0).unwrap();
    // Keep a single 32-example batch.
    if ds.len() > 32 {
        let idx: Vec<usize> = (0..32).collect();
        let (_, c, w, h) = ds.images.dim();
        let mut images32 = Array4::zeros((32, c, w, h));
        for (r, &i) in idx.iter().enumerate() {
            images32
                .index_axis_mut(ndarray::Axis(0), r)
                .assign(&ds.images.index_axis(ndarray::Axis(0), i));
        }
        ds = DetectorDataset {
            images: images32,
            labels: ds.labels[..32].to_vec(),
            splits: vec![Split::Train; 32],
            class_weights: ds.class_weights,
            classifier_hash: ds.classifier_hash.clone(),
            source_attack: ds.source_attack.clone(),
        };
    }
    assert!(ds.labels.contains(&BENIGN) && ds.labels.contains(&ADVERSARIAL));
    let recipe = TrainRecipe {
        epochs: 200,
        lr: 3e-2,
        batch_size: 32,
        seed: 3,
        cache_features: true,
        val_fraction: 0.0,
    };
    let history = train(&mut detector, &classifier, &ds, &recipe).unwrap();
    let final_loss = history.last().unwrap().train_loss;
    assert!(
        final_loss < 0.01,
        "cross-entropy after 200 steps: {final_loss}"
    );
}

#[test]
fn training_is_bit_reproducible_and_validates() {
    let (classifier, detector, images, labels) = fixture();
    let adv = fgsm_set(&classifier, &images, &labels, 3);
    let ds = assemble(&classifier, &images, &labels, &adv, true, 0.1).unwrap();
    let recipe = TrainRecipe {
        epochs: 2,
        lr: 1e-3,
        batch_size: 16,
        seed: 9,
        cache_features: true,
        val_fraction: 0.1,
    };
    let mut d1 = detector.clone();
    let h1 = train(&mut d1, &classifier, &ds, &recipe).unwrap();
    let mut d2 = detector.clone();
    let h2 = train(&mut d2, &classifier, &ds, &recipe).unwrap();
    assert_eq!(d1.state_hash(), d2.state_hash(), "identical final parameters");
    assert_eq!(h1.len(), h2.len());
    for (a, b) in h1.iter().zip(h2.iter()) {
        assert_eq!(a.train_loss, b.train_loss);
        assert_eq!(a.val_auc.to_bits(), b.val_auc.to_bits());
    }
    // Recompute-on-the-fly path matches the cached path.
    let mut d3 = detector.clone();
    let recipe_nc = TrainRecipe {
        cache_features: false,
        ..recipe.clone()
    };
    let h3 = train(&mut d3, &classifier, &ds, &recipe_nc).unwrap();
    assert_eq!(d1.state_hash(), d3.state_hash());
    assert_eq!(h1[0].train_loss, h3[0].train_loss);

    // Zero epochs is rejected.
    let mut d4 = detector.clone();
    let bad = TrainRecipe {
        epochs: 0,
        ..recipe
    };
    assert!(train(&mut d4, &classifier, &ds, &bad).is_err());
}

#[test]
fn fine_tune_appends_lineage_and_needs_examples() {
    let (classifier, mut detector, images, labels) = fixture();
    let adv = fgsm_set(&classifier, &images, &labels, 4);
    let ds = assemble(&classifier, &images, &labels, &adv, true, 0.0).unwrap();
    let recipe = TrainRecipe {
        epochs: 1,
        lr: 1e-3,
        batch_size: 16,
        seed: 9,
        cache_features: true,
        val_fraction: 0.0,
    };
    train(&mut detector, &classifier, &ds, &recipe).unwrap();
    assert_eq!(detector.meta.lineage, vec!["fgsm_0_3".to_string()]);
    assert_eq!(detector.meta.epochs_trained, 1);

    let spec2 = AttackSpec {
        id: "pgd_small".into(),
        params: AttackParams::Pgd {
            eps: 0.1,
            eps_step: 0.05,
            max_iter: 2,
            random_start: true,
        },
        seed: 5,
    };
    let adv2 = craft_dataset(&classifier, &spec2, &images, &labels, None).unwrap();
    let h = fine_tune(&mut detector, &classifier, &adv2, &images, &labels, 2, &recipe).unwrap();
    assert_eq!(h.len(), 2);
    assert_eq!(
        detector.meta.lineage,
        vec!["fgsm_0_3".to_string(), "pgd_small".to_string()]
    );
    assert_eq!(detector.meta.epochs_trained, 3);
    assert_eq!(detector.meta.trained_against.as_deref(), Some("fgsm_0_3"));

    // No successful new examples is an error.
    let mut empty = adv2.clone();
    empty.success = vec![false; empty.len()];
    assert!(fine_tune(&mut detector, &classifier, &empty, &images, &labels, 1, &recipe).is_err());

    // Fine-tuning an untrained detector is an error.
    let (_, mut fresh, ..) = fixture();
    assert!(fine_tune(&mut fresh, &classifier, &adv2, &images, &labels, 1, &recipe).is_err());
}

#[test]
fn roc_auc_matches_hand_counts_and_brute_force() {
    // Hand-counted pairs: (0.35 > 0.1), (0.35 < 0.4), (0.8 > 0.1), (0.8 > 0.4).
    let auc = roc_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
    assert!((auc - 0.75).abs() < 1e-12);

    // Perfect separation and all-ties.
    assert!((roc_auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap() - 1.0).abs() < 1e-12);
    assert!((roc_auc(&[0.5, 0.5, 0.5, 0.5], &[false, true, false, true]).unwrap() - 0.5).abs() < 1e-12);

    // Single-class input errors.
    assert!(roc_auc(&[0.1, 0.2], &[true, true]).is_err());

    let mut rng = StdRng::seed_from_u64(7);
    for trial in 0..100 {
        let n = rng.random_range(2..=500usize);
        let mut scores = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            // Coarse grid so ties actually occur.
            scores.push((rng.random_range(0..20u32) as f64) / 20.0);
            labels.push(rng.random::<f64>() < 0.5);
        }
        if !labels.contains(&true) || !labels.contains(&false) {
            continue;
        }
        let fast = roc_auc(&scores, &labels).unwrap();
        // O(n^2) pairwise oracle with ties counted half.
        let mut num = 0.0f64;
        let mut pairs = 0.0f64;
        for i in 0..n {
            if !labels[i] {
                continue;
            }
            for j in 0..n {
                if labels[j] {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
        let brute = num / pairs;
        assert_eq!(fast, brute, "trial {trial}: rank AUC must equal pair counting");

        // Monotone-transform invariance.
        let transformed: Vec<f64> = scores.iter().map(|s| (3.0 * s + 1.0).exp()).collect();
        let t = roc_auc(&transformed, &labels).unwrap();
        assert!((t - fast).abs() < 1e-12);

        // Complement symmetry when no ties: perturb to unique scores.
        let unique: Vec<f64> = scores
            .iter()
            .enumerate()
            .map(|(i, s)| s + i as f64 * 1e-9)
            .collect();
        let u = roc_auc(&unique, &labels).unwrap();
        let neg: Vec<f64> = unique.iter().map(|s| -s).collect();
        let v = roc_auc(&neg, &labels).unwrap();
        assert!((u + v - 1.0).abs() < 1e-12);
    }
}

#[test]
fn evaluate_detector_reports_all_fields() {
    let (classifier, mut detector, images, labels) = fixture();
    let adv = fgsm_set(&classifier, &images, &labels, 11);
    let ds = assemble(&classifier, &images, &labels, &adv, true, 0.0).unwrap();
    let recipe = TrainRecipe {
        epochs: 3,
        lr: 1e-2,
        batch_size: 16,
        seed: 12,
        cache_features: true,
        val_fraction: 0.0,
    };
    train(&mut detector, &classifier, &ds, &recipe).unwrap();

    let report = evaluate_detector(&detector, &classifier, &images, &labels, &adv, "cfg", 100).unwrap();
    assert!(report.auc >= 0.0 && report.auc <= 1.0);
    assert!(report.detection_accuracy >= 0.0 && report.detection_accuracy <= 1.0);
    assert!((report.attack_success_rate - adv.success_rate()).abs() < 1e-12);
    assert!(report.mean_latency_ms > 0.0);
    assert!(report.detector_only_latency_ms > 0.0);
    assert!(report.detector_only_latency_ms <= report.mean_latency_ms);
    assert_eq!(report.attack_id, "fgsm_0_3");

    // Attack success rate counts flags directly: force 60%.
    let mut forced = adv.clone();
    let n = forced.len();
    for (i, s) in forced.success.iter_mut().enumerate() {
        *s = i < (n * 6) / 10;
    }
    let r2 = evaluate_detector(&detector, &classifier, &images, &labels, &forced, "cfg", 100).unwrap();
    assert!((r2.attack_success_rate - (n * 6 / 10) as f64 / n as f64).abs() < 1e-12);
}

#[test]
fn generalization_diagonal_matches_standalone_evaluation() {
    let (classifier, base_detector, images, labels) = fixture();
    let mut detectors = BTreeMap::new();
    let mut sets = BTreeMap::new();
    for (id, eps, seed) in [("fgsm_a", 0.2f64, 21u64), ("fgsm_b", 0.3, 22)] {
        let spec = AttackSpec {
            id: id.into(),
            params: AttackParams::Fgsm { eps },
            seed,
        };
        let adv = craft_dataset(&classifier, &spec, &images, &labels, None).unwrap();
        let ds = assemble(&classifier, &images, &labels, &adv, true, 0.0).unwrap();
        let mut det = base_detector.clone();
        let recipe = TrainRecipe {
            epochs: 2,
            lr: 1e-2,
            batch_size: 16,
            seed,
            cache_features: true,
            val_fraction: 0.0,
        };
        train(&mut det, &classifier, &ds, &recipe).unwrap();
        detectors.insert(id.to_string(), det);
        sets.insert(id.to_string(), adv);
    }
    let matrix =
        generalization_matrix(&detectors, &sets, &classifier, &images, &labels).unwrap();
    assert_eq!(matrix.auc.len(), 2);
    assert_eq!(matrix.auc[0].len(), 2);
    assert_eq!(matrix.row_avg.len(), 2);
    for (i, train_id) in matrix.train_attacks.iter().enumerate() {
        let standalone = evaluate_detector(
            &detectors[train_id],
            &classifier,
            &images,
            &labels,
            &sets[train_id],
            "cfg",
            100,
        )
        .unwrap();
        let j = matrix.test_attacks.iter().position(|t| t == train_id).unwrap();
        assert!(
            (matrix.auc[i][j] - standalone.auc).abs() < 1e-12,
            "diagonal consistency"
        );
        let avg: f64 = matrix.auc[i].iter().sum::<f64>() / matrix.auc[i].len() as f64;
        assert!((matrix.row_avg[i] - avg).abs() < 1e-12);
    }
}

#[test]
fn separability_near_zero_for_unperturbed_copies() {
    let (classifier, detector, images, labels) = fixture();
    // An "adversarial" set that is just a copy of the benign images.
    let spec = AttackSpec {
        id: "noop".into(),
        params: AttackParams::Fgsm { eps: 1e-9 },
        seed: 1,
    };
    let mut adv = craft_dataset(&classifier, &spec, &images, &labels, None).unwrap();
    adv.perturbed = adv.originals.clone();
    let report = separability_report(&classifier, &detector, &images, &adv).unwrap();
    assert_eq!(report.classifier_side.len(), detector.plan.len());
    assert_eq!(report.detector_side.len(), detector.plan.len());
    for d in report.classifier_side.iter().chain(report.detector_side.iter()) {
        assert!(*d < 0.01, "distance {d} should be ~0 for identical sets");
    }
}

#[test]
fn word_export_round_trips_bit_exactly() {
    let (classifier, detector, images, labels) = fixture();
    let dir = tempfile::tempdir().unwrap();
    let flags: Vec<bool> = (0..images.dim().0).map(|i| i % 2 == 0).collect();
    let manifest = export_words(
        &detector,
        &classifier,
        &images,
        &labels,
        &flags,
        dir.path(),
        "cfg",
        true,
    )
    .unwrap();
    assert_eq!(manifest.rows, images.dim().0 * detector.plan.len());
    assert_eq!(manifest.cols, detector.embedding.word_dim());
    assert!(dir.path().join("words.csv").exists());

    let (loaded, vectors) = load_words::<f32>(dir.path()).unwrap();
    assert_eq!(loaded.rows, manifest.rows);
    assert_eq!(loaded.example_index, manifest.example_index);
    assert_eq!(loaded.adversarial, manifest.adversarial);
    // Recompute a row and compare bit-exactly (f32 storage).
    let (_, series) = classifier
        .forward_with_taps(
            &images
                .index_axis(ndarray::Axis(0), 0)
                .to_owned()
                .insert_axis(ndarray::Axis(0)),
            &detector.plan,
        )
        .unwrap();
    let sentence = detector.sentence(&series).unwrap();
    for li in 0..detector.plan.len() {
        for k in 0..manifest.cols {
            assert_eq!(vectors[[li, k]], sentence.words[[0, li, k]]);
        }
    }

    let empty = Array4::<f32>::zeros((0, 3, 8, 8));
    assert!(export_words(&detector, &classifier, &empty, &[], &[], dir.path(), "cfg", false).is_err());
}

//! Attack optimizer oracles: closed-form linear-model checks, projection
//! invariants, reductions between attacks, and crafting determinism.

use ndarray::{arr1, arr2, Array1, Array2, Array4};
use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};

use featsent_core::attacks::{
    adaptive_alternating, adaptive_combined, apgd, apgd_traced, binary_search_update, craft_dataset,
    cw_l2, decision_distance, deepfool, dlr_loss, dlr_per_example, ead, ead_objective, fgsm, jsma,
    pgd, pgd_traced, soft_threshold, ApgdLoss, ApgdParams, AttackParams, AttackSpec, CwParams,
    DecisionRule, DiffModel, EadParams, LinearModel, PgdParams,
};
use featsent_core::classifier::{build_classifier, Architecture, Classifier, ClassifierSpec};
use featsent_core::detector::Detector;
use featsent_nn::loss::{ce_per_example, softmax};

fn x_of(vals: &[f64]) -> Array4<f64> {
    Array4::from_shape_vec((1, 1, 1, vals.len()), vals.to_vec()).unwrap()
}

/// Two-class logistic model with logit difference w.x + b: logits
/// [0, w.x + b] so the CE gradient at label 0 is sigmoid(w.x+b) * w.
fn two_class_model(w: &[f64], b: f64) -> LinearModel<f64> {
    let p = w.len();
    let mut weights = Array2::zeros((2, p));
    for (j, &wj) in w.iter().enumerate() {
        weights[[1, j]] = wj;
    }
    LinearModel::new(weights, arr1(&[0.0, b]))
}

#[test]
fn fgsm_two_pixel_analytic_case() {
    // Loss gradient direction = w = (2, -1); eps 0.1 moves (+, -).
    let model = two_class_model(&[2.0, -1.0], 0.0);
    let x = x_of(&[0.5, 0.5]);
    let adv = fgsm(&model, &x, &[0], 0.1).unwrap();
    assert!((adv[[0, 0, 0, 0]] - 0.6).abs() < 1e-12);
    assert!((adv[[0, 0, 0, 1]] - 0.4).abs() < 1e-12);
}

#[test]
fn fgsm_zero_eps_is_identity_and_box_clamps() {
    let model = two_class_model(&[2.0, -1.0], 0.0);
    let x = x_of(&[0.5, 0.5]);
    let same = fgsm(&model, &x, &[0], 0.0).unwrap();
    assert_eq!(same, x);

    let boundary = x_of(&[1.0, 0.0]);
    let adv = fgsm(&model, &boundary, &[0], 0.1).unwrap();
    assert!((adv[[0, 0, 0, 0]] - 1.0).abs() < 1e-12);
    assert!((adv[[0, 0, 0, 1]] - 0.0).abs() < 1e-12);
}

#[test]
fn pgd_single_step_reduces_to_fgsm_bit_exactly() {
    let model = two_class_model(&[1.5, -0.3], 0.2);
    let mut rng = StdRng::seed_from_u64(1);
    for trial in 0..50 {
        let x = x_of(&[
            rng.random_range(0.0..1.0),
            rng.random_range(0.0..1.0),
        ]);
        let eps = 0.05 + 0.1 * (trial as f64 / 50.0);
        let f = fgsm(&model, &x, &[0], eps).unwrap();
        let p = pgd(
            &model,
            &x,
            &[0],
            &PgdParams {
                eps,
                alpha: eps,
                iters: 1,
                random_start: false,
            },
            &mut rng,
        )
        .unwrap();
        assert_eq!(f, p, "bit-exact reduction");
    }
}

#[test]
fn pgd_constant_gradient_marches_to_the_corner() {
    let model = two_class_model(&[1.0, -2.0], 0.0);
    let x = x_of(&[0.5, 0.5]);
    let mut rng = StdRng::seed_from_u64(2);
    let adv = pgd(
        &model,
        &x,
        &[0],
        &PgdParams {
            eps: 0.1,
            alpha: 0.02,
            iters: 10,
            random_start: false,
        },
        &mut rng,
    )
    .unwrap();
    // Gradient sign is constant (+, -): ten steps of 0.02 land on the
    // eps-ball corner x + (0.1, -0.1).
    assert!((adv[[0, 0, 0, 0]] - 0.6).abs() < 1e-9);
    assert!((adv[[0, 0, 0, 1]] - 0.4).abs() < 1e-9);
}

#[test]
fn pgd_and_apgd_respect_ball_and_box_over_random_trials() {
    let model = two_class_model(&[1.1, -0.7], 0.1);
    let mut rng = StdRng::seed_from_u64(3);
    for i in 0..1000 {
        let x = x_of(&[rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]);
        let eps = rng.random_range(0.01..0.3);
        let adv = if i % 2 == 0 {
            pgd(
                &model,
                &x,
                &[i % 2],
                &PgdParams {
                    eps,
                    alpha: eps / 3.0,
                    iters: 5,
                    random_start: true,
                },
                &mut rng,
            )
            .unwrap()
        } else {
            // Three classes for APGD so DLR is defined.
            let m3 = LinearModel::new(
                arr2(&[[0.5, -0.2], [-0.4, 0.8], [0.1, 0.1]]),
                arr1(&[0.0, 0.1, -0.1]),
            );
            apgd(&m3, &x, &[0], &ApgdParams::new(eps, 5, ApgdLoss::Ce), &mut rng).unwrap()
        };
        for (a, o) in adv.iter().zip(x.iter()) {
            assert!(*a >= 0.0 && *a <= 1.0, "box invariant");
            assert!((a - o).abs() <= eps + 1e-6, "l-inf invariant");
        }
    }
}

#[test]
fn deepfool_skips_already_misclassified_inputs() {
    let model = two_class_model(&[1.0, 1.0], -5.0);
    // Model predicts class 0 everywhere in the box; true label 1 means
    // the input is already misclassified.
    let x = x_of(&[0.2, 0.2]);
    let out = deepfool(&model, &x, &[1], 50, 0.02).unwrap();
    assert_eq!(out[0].iterations, 0);
    assert!(out[0].success);
    assert_eq!(out[0].x_adv, x);
}

#[test]
fn deepfool_matches_hyperplane_distance_on_a_linear_model() {
    // Binary linear classifier, logit difference d(x) = w.x + b. The
    // analytic l2 distance to the boundary is |d| / ||w||; DeepFool on
    // softmax outputs matches within 5% near the boundary, times the
    // (1 + overshoot) factor.
    let w = [3.0, -1.5];
    let b = -0.45; // d(x0) = 3*0.4 - 1.5*0.3 - 0.45 = 0.3 > 0: predicts class 1
    let model = two_class_model(&w, b);
    let x = x_of(&[0.4, 0.3]);
    let d0: f64 = 0.3;
    let norm = (w[0] * w[0] + w[1] * w[1]).sqrt();
    let overshoot = 0.02;
    let out = deepfool(&model, &x, &[1], 1, overshoot).unwrap();
    let perturbation: f64 = out[0]
        .x_adv
        .iter()
        .zip(x.iter())
        .map(|(a, o)| (a - o) * (a - o))
        .sum::<f64>()
        .sqrt();
    let expected = (1.0 + overshoot) * d0.abs() / norm;
    let rel = (perturbation - expected).abs() / expected;
    assert!(rel < 0.05, "relative error {rel}");
}

#[test]
fn deepfool_reports_budget_exhaustion() {
    // Boundary far away: one iteration cannot flip the prediction.
    let model = two_class_model(&[0.05, 0.05], -10.0);
    let x = x_of(&[0.5, 0.5]);
    let out = deepfool(&model, &x, &[0], 1, 0.02).unwrap();
    assert_eq!(out[0].iterations, 1);
    assert!(!out[0].success);
}

#[test]
fn jsma_saliency_zero_cases_are_exact() {
    // Random Jacobians: every pixel with J_it < 0 or sum_{j!=t} J_ij > 0
    // has exactly zero saliency.
    let mut rng = StdRng::seed_from_u64(5);
    for _ in 0..200 {
        let p = 6;
        let alpha: Array1<f64> = Array1::from_shape_simple_fn(p, || rng.random_range(-1.0..1.0));
        let beta: Array1<f64> = Array1::from_shape_simple_fn(p, || rng.random_range(-1.0..1.0));
        let s = featsent_core::attacks::saliency_map(&alpha, &beta);
        for i in 0..p {
            if alpha[i] < 0.0 || beta[i] > 0.0 {
                assert_eq!(s[i], 0.0);
            } else {
                assert!((s[i] - alpha[i] * beta[i].abs()).abs() < 1e-15);
            }
        }
    }
}

#[test]
fn jsma_budget_arithmetic_and_linear_ranking() {
    // gamma 0.1 of 3072 pixels caps modification at 307 pixels.
    assert_eq!((0.1f64 * 3072.0).floor() as usize, 307);

    // Diagonal linear softmax model: pixel i only drives class i, so
    // toward target 0 the saliency is positive only at pixel 0 (its
    // alpha > 0 and the off-target sum is the exact negative).
    let weights = arr2(&[[4.0, 0.0, 0.0], [0.0, 4.0, 0.0], [0.0, 0.0, 4.0]]);
    let model = LinearModel::new(weights, arr1(&[0.0, 0.0, 0.0]));
    let x = x_of(&[0.2, 0.5, 0.3]); // predicts class 1
    let target = 0usize;
    let out = jsma(&model, &x, &[target], 1.0, 0.5).unwrap();
    assert!(out[0].success);
    assert!((out[0].x_adv[[0, 0, 0, 0]] - 1.0).abs() < 1e-12, "pixel 0 saturates");
    assert_eq!(out[0].x_adv[[0, 0, 0, 1]], x[[0, 0, 0, 1]]);
    assert_eq!(out[0].x_adv[[0, 0, 0, 2]], x[[0, 0, 0, 2]]);
    assert_eq!(out[0].pixels_modified, 1);
}

#[test]
fn cw_returns_zero_perturbation_when_already_confidently_targeted() {
    // Class 1 logit dominates by more than the confidence at x0.
    let model = LinearModel::new(arr2(&[[0.0, 0.0], [5.0, 5.0]]), arr1(&[0.0, 0.0]));
    let x = x_of(&[0.6, 0.6]);
    let out = cw_l2(
        &model,
        &x,
        &[1],
        &CwParams {
            binary_search_steps: 3,
            steps: 50,
            ..CwParams::default()
        },
    )
    .unwrap();
    assert!(out[0].success);
    assert!(out[0].l2 < 1e-3, "l2 {}", out[0].l2);
}

#[test]
fn cw_perturbation_is_parallel_to_the_logit_difference() {
    // Two-class linear model: the minimum-norm delta satisfying the
    // margin constraint is parallel to w = w_target - w_other.
    let weights = arr2(&[[1.0, 2.0, -1.0], [2.0, -1.0, 1.0]]);
    let model = LinearModel::new(weights, arr1(&[0.6, 0.0]));
    let x = x_of(&[0.5, 0.5, 0.5]);
    let out = cw_l2(
        &model,
        &x,
        &[1],
        &CwParams {
            binary_search_steps: 6,
            steps: 400,
            stepsize: 0.01,
            confidence: 0.2,
            initial_const: 0.1,
        },
    )
    .unwrap();
    assert!(out[0].success);
    let delta: Vec<f64> = out[0]
        .x_adv
        .iter()
        .zip(x.iter())
        .map(|(a, o)| a - o)
        .collect();
    let w = [1.0f64, -3.0, 2.0]; // w_1 - w_0
    let dot: f64 = delta.iter().zip(w.iter()).map(|(d, wi)| d * wi).sum();
    let cos = dot
        / (delta.iter().map(|d| d * d).sum::<f64>().sqrt()
            * w.iter().map(|wi| wi * wi).sum::<f64>().sqrt());
    assert!(cos > 0.99, "cosine to w is {cos}");
}

#[test]
fn binary_search_shrinks_after_success_and_grows_after_failure() {
    let (lo, hi, next) = binary_search_update(0.0, f64::INFINITY, 0.1, true);
    assert_eq!((lo, hi), (0.0, 0.1));
    assert!(next < 0.1);
    let (lo2, hi2, next2) = binary_search_update(0.0, f64::INFINITY, 0.1, false);
    assert_eq!((lo2, hi2), (0.1, f64::INFINITY));
    assert!((next2 - 1.0).abs() < 1e-12);
    let (_, _, next3) = binary_search_update(0.1, 0.4, 0.25, false);
    assert!((next3 - 0.325).abs() < 1e-12);
}

#[test]
fn soft_threshold_closed_form() {
    assert!((soft_threshold(0.5, 0.2) - 0.3).abs() < 1e-15);
    assert_eq!(soft_threshold(-0.1, 0.2), 0.0);
    let mut rng = StdRng::seed_from_u64(6);
    for _ in 0..10_000 {
        let d: f64 = rng.random_range(-2.0..2.0);
        let beta = rng.random_range(0.0..0.5);
        let expected = d.signum() * (d.abs() - beta).max(0.0);
        assert!((soft_threshold(d, beta) - expected).abs() < 1e-9);
    }
}

#[test]
fn ead_objective_reduces_to_l2_form_at_zero_beta() {
    let delta = [0.3, -0.2, 0.1];
    let a = 2.0;
    let margin = 0.4;
    let expected = a * margin + delta.iter().map(|d| d * d).sum::<f64>();
    assert!((ead_objective(a, margin, 0.0, &delta) - expected).abs() < 1e-12);
}

#[test]
fn ead_decision_rule_prefers_smaller_l1() {
    assert_eq!(decision_distance(DecisionRule::L1, 0.01, 3.0, 9.0), 3.0);
    assert_eq!(decision_distance(DecisionRule::L1, 0.01, 2.0, 100.0), 2.0);
    assert!(decision_distance(DecisionRule::L1, 0.01, 2.0, 100.0) < decision_distance(DecisionRule::L1, 0.01, 3.0, 9.0));
    let en = decision_distance(DecisionRule::ElasticNet, 0.5, 2.0, 1.0);
    assert!((en - 2.0).abs() < 1e-12);
}

#[test]
fn ead_finds_small_l1_perturbations() {
    let weights = arr2(&[[1.0, 2.0, -1.0], [2.0, -1.0, 1.0]]);
    let model = LinearModel::new(weights, arr1(&[0.4, 0.0]));
    let x = x_of(&[0.5, 0.5, 0.5]);
    let out = ead(
        &model,
        &x,
        &[1],
        &EadParams {
            binary_search_steps: 5,
            steps: 300,
            ..EadParams::default()
        },
    )
    .unwrap();
    assert!(out[0].success);
    assert!(out[0].l1 > 0.0 && out[0].l1 < 3.0);
    for v in out[0].x_adv.iter() {
        assert!(*v >= 0.0 && *v <= 1.0);
    }
}

#[test]
fn dlr_formula_and_invariances() {
    let z = arr1(&[3.0, 1.0, 0.0]);
    let v: f64 = dlr_loss(&z.view(), 0).unwrap();
    assert!((v - (-2.0 / 3.0)).abs() < 1e-12);

    let mut rng = StdRng::seed_from_u64(7);
    for _ in 0..500 {
        let z = Array1::from_shape_simple_fn(5, || rng.random_range(-3.0..3.0));
        let y = rng.random_range(0..5usize);
        let base: f64 = match dlr_loss(&z.view(), y) {
            Ok(v) => v,
            Err(_) => continue,
        };
        let c = rng.random_range(-10.0..10.0);
        let lambda = rng.random_range(0.1..10.0);
        let shifted = z.mapv(|v| v + c);
        let scaled = z.mapv(|v| v * lambda);
        assert!((dlr_loss(&shifted.view(), y).unwrap() - base).abs() < 1e-9);
        assert!((dlr_loss(&scaled.view(), y).unwrap() - base).abs() < 1e-9);
    }

    // Degenerate denominator errors.
    let flat = arr1(&[1.0, 1.0, 1.0]);
    assert!(dlr_loss(&flat.view(), 0).is_err());
    let two = arr1(&[1.0, 0.0]);
    assert!(dlr_loss(&two.view(), 0).is_err());
}

#[test]
fn apgd_degenerates_to_pgd_without_momentum_or_schedule() {
    let m3 = LinearModel::new(
        arr2(&[[0.5, -0.2], [-0.4, 0.8], [0.1, 0.1]]),
        arr1(&[0.0, 0.1, -0.1]),
    );
    let x = x_of(&[0.4, 0.6]);
    let eps = 0.1;
    let alpha = 0.02;
    let mut rng1 = StdRng::seed_from_u64(8);
    let mut pgd_trace = Vec::new();
    pgd_traced(
        &m3,
        &x,
        &[0],
        &PgdParams {
            eps,
            alpha,
            iters: 6,
            random_start: false,
        },
        &mut rng1,
        Some(&mut pgd_trace),
    )
    .unwrap();

    let mut rng2 = StdRng::seed_from_u64(8);
    let params = ApgdParams {
        history_weight: 0.0,
        use_schedule: false,
        step_init: Some(alpha),
        random_start: false,
        ..ApgdParams::new(eps, 6, ApgdLoss::Ce)
    };
    let mut apgd_trace = Vec::new();
    apgd_traced(&m3, &x, &[0], &params, &mut rng2, Some(&mut apgd_trace)).unwrap();

    assert_eq!(pgd_trace.len(), apgd_trace.len());
    for (a, b) in pgd_trace.iter().zip(apgd_trace.iter()) {
        assert_eq!(a, b, "trajectories must match step for step");
    }
}

#[test]
fn apgd_best_iterate_dominates_plain_pgd_loss() {
    let m3 = LinearModel::new(
        arr2(&[[0.5, -0.2], [-0.4, 0.8], [0.1, 0.1]]),
        arr1(&[0.0, 0.1, -0.1]),
    );
    let x = x_of(&[0.4, 0.6]);
    let labels = [0usize];
    let eps = 0.15;
    let iters = 20;
    let mut rng = StdRng::seed_from_u64(9);
    let adv_apgd = apgd(&m3, &x, &labels, &ApgdParams::new(eps, iters, ApgdLoss::Ce), &mut rng).unwrap();
    let adv_pgd = pgd(
        &m3,
        &x,
        &labels,
        &PgdParams {
            eps,
            alpha: eps / 4.0,
            iters,
            random_start: false,
        },
        &mut rng,
    )
    .unwrap();
    let ce = |adv: &Array4<f64>| ce_per_example(&m3.logits(adv), &labels)[0];
    assert!(ce(&adv_apgd) >= ce(&adv_pgd) - 1e-9);
}

fn desk_classifier_and_detector() -> (Classifier<f64>, Detector<f64>) {
    let spec = ClassifierSpec {
        architecture: Architecture::Tinycnn,
        num_classes: 10,
        input_shape: (3, 8, 8),
    };
    let classifier: Classifier<f64> = build_classifier(&spec, 5).unwrap();
    let plan = classifier.plan_taps(&["B2", "B4"]).unwrap();
    let detector = Detector::new(plan, vec![1, 2], 4, 0.5, 6).unwrap();
    (classifier, detector)
}

#[test]
fn combined_attack_at_sigma_zero_equals_plain_pgd() {
    let (classifier, detector) = desk_classifier_and_detector();
    let mut rng = StdRng::seed_from_u64(10);
    let x = Array4::from_shape_simple_fn((2, 3, 8, 8), || rng.random_range(0.2..0.8));
    let labels = [1usize, 3];
    let eps = 8.0 / 255.0;
    let alpha = 2.0 / 255.0;

    let mut rng1 = StdRng::seed_from_u64(11);
    let plain = pgd(
        &classifier,
        &x,
        &labels,
        &PgdParams {
            eps,
            alpha,
            iters: 4,
            random_start: true,
        },
        &mut rng1,
    )
    .unwrap();
    let mut rng2 = StdRng::seed_from_u64(11);
    let combined = adaptive_combined(
        &classifier, &detector, &x, &labels, eps, alpha, 4, 0.0, true, &mut rng2,
    )
    .unwrap();
    assert_eq!(plain, combined);
}

#[test]
fn alternating_single_iteration_is_one_classifier_step() {
    let (classifier, detector) = desk_classifier_and_detector();
    let mut rng = StdRng::seed_from_u64(12);
    let x = Array4::from_shape_simple_fn((2, 3, 8, 8), || rng.random_range(0.2..0.8));
    let labels = [0usize, 2];
    let eps = 0.05;

    let mut rng1 = StdRng::seed_from_u64(13);
    let one_pgd = pgd(
        &classifier,
        &x,
        &labels,
        &PgdParams {
            eps,
            alpha: eps / 2.0,
            iters: 1,
            random_start: true,
        },
        &mut rng1,
    )
    .unwrap();
    let mut rng2 = StdRng::seed_from_u64(13);
    let alt = adaptive_alternating(
        &classifier,
        &detector,
        &x,
        &labels,
        eps,
        eps / 2.0,
        1,
        true,
        &mut rng2,
    )
    .unwrap();
    assert_eq!(one_pgd, alt);
}

#[test]
fn combined_half_sigma_is_the_half_weighted_sign_sum() {
    let (classifier, detector) = desk_classifier_and_detector();
    let mut rng = StdRng::seed_from_u64(14);
    let x = Array4::from_shape_simple_fn((1, 3, 8, 8), || rng.random_range(0.3..0.7));
    let labels = [4usize];
    let eps = 0.2;
    let alpha = 0.01;

    // One step with sigma = 0.5.
    let mut rng1 = StdRng::seed_from_u64(15);
    let stepped = adaptive_combined(
        &classifier, &detector, &x, &labels, eps, alpha, 1, 0.5, false, &mut rng1,
    )
    .unwrap();

    // Hand-build the same step from the two sign fields.
    let g_c_field =
        featsent_core::attacks::classifier_loss_grad(&classifier, &detector, &x, &labels).unwrap();
    let g_d_field = featsent_core::attacks::detector_loss_grad(&classifier, &detector, &x).unwrap();
    let sgn = |v: f64| if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 };
    let expected = ndarray::Zip::from(&x)
        .and(&g_c_field)
        .and(&g_d_field)
        .map_collect(|&xv, &gc, &gd| {
            (xv + alpha * (0.5 * sgn(gc) + 0.5 * sgn(gd))).clamp(0.0, 1.0)
        });
    for (a, b) in stepped.iter().zip(expected.iter()) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn grid_search_oracle_bounds_pgd_loss_on_two_pixels() {
    // Three-class linear model over two pixels; 21x21 grid over the
    // eps-box gives a brute-force optimum PGD must approach.
    let m3 = LinearModel::new(
        arr2(&[[0.9, -0.4], [-0.6, 0.7], [0.2, 0.3]]),
        arr1(&[0.05, 0.0, -0.05]),
    );
    let x = x_of(&[0.5, 0.5]);
    let labels = [0usize];
    let eps = 0.1;

    let mut best = f64::NEG_INFINITY;
    let mut max_grad: f64 = 0.0;
    let steps = 21;
    for i in 0..steps {
        for j in 0..steps {
            let dx = -eps + 2.0 * eps * i as f64 / (steps - 1) as f64;
            let dy = -eps + 2.0 * eps * j as f64 / (steps - 1) as f64;
            let cand = x_of(&[0.5 + dx, 0.5 + dy]);
            let ce = ce_per_example(&m3.logits(&cand), &labels)[0];
            best = best.max(ce);
            // Numeric CE gradient magnitude for the resolution bound.
            let p = softmax(&m3.logits(&cand));
            let mut g = [0.0f64; 2];
            for k in 0..3 {
                let w = [m3.weights[[k, 0]], m3.weights[[k, 1]]];
                let coef = p[[0, k]] - if k == labels[0] { 1.0 } else { 0.0 };
                g[0] += coef * w[0];
                g[1] += coef * w[1];
            }
            max_grad = max_grad.max((g[0] * g[0] + g[1] * g[1]).sqrt());
        }
    }
    let h = 2.0 * eps / (steps - 1) as f64;
    let resolution_bound = max_grad * h * std::f64::consts::SQRT_2;

    let mut rng = StdRng::seed_from_u64(17);
    let adv = pgd(
        &m3,
        &x,
        &labels,
        &PgdParams { eps, alpha: eps / 10.0, iters: 40, random_start: false },
        &mut rng,
    )
    .unwrap();
    let achieved = ce_per_example(&m3.logits(&adv), &labels)[0];
    assert!(
        achieved >= best - resolution_bound,
        "achieved {achieved} vs grid optimum {best} (bound {resolution_bound})"
    );
}

#[test]
fn craft_dataset_is_deterministic_and_validates() {
    let (classifier, _) = desk_classifier_and_detector();
    let mut rng = StdRng::seed_from_u64(18);
    let images = Array4::from_shape_simple_fn((9, 3, 8, 8), || rng.random_range(0.0..1.0));
    let labels: Vec<usize> = (0..9).map(|i| i % 10).collect();
    let spec = AttackSpec {
        id: "pgd_test".into(),
        params: AttackParams::Pgd {
            eps: 0.05,
            eps_step: 0.01,
            max_iter: 3,
            random_start: true,
        },
        seed: 77,
    };
    let a = craft_dataset(&classifier, &spec, &images, &labels, None).unwrap();
    let b = craft_dataset(&classifier, &spec, &images, &labels, None).unwrap();
    assert_eq!(a.perturbed, b.perturbed);
    assert_eq!(a.success, b.success);
    assert_eq!(a.classifier_hash, b.classifier_hash);
    a.validate().unwrap();
    // Success flag matches prediction disagreement.
    for i in 0..a.len() {
        assert_eq!(a.success[i], a.adversarial_predictions[i] != labels[i]);
    }

    let empty = Array4::<f64>::zeros((0, 3, 8, 8));
    assert!(craft_dataset(&classifier, &spec, &empty, &[], None).is_err());

    // Adaptive attacks require a detector.
    let adaptive = AttackSpec {
        id: "adapt".into(),
        params: AttackParams::AdaptiveAlt {
            eps: 0.05,
            eps_step: 0.01,
            max_iter: 2,
            random_start: false,
        },
        seed: 1,
    };
    assert!(craft_dataset(&classifier, &adaptive, &images, &labels, None).is_err());
}

#[test]
fn adversarial_set_round_trips_through_disk() {
    let (classifier, _) = desk_classifier_and_detector();
    let mut rng = StdRng::seed_from_u64(19);
    let images = Array4::from_shape_simple_fn((4, 3, 8, 8), || rng.random_range(0.0f64..1.0));
    // f32-exact values so the raw-f32 files round trip bit-exactly.
    let images = images.mapv(|v| v as f32 as f64);
    let labels = vec![0usize, 1, 2, 3];
    let spec = AttackSpec {
        id: "fgsm_test".into(),
        params: AttackParams::Fgsm { eps: 0.1 },
        seed: 3,
    };
    let set = craft_dataset(&classifier, &spec, &images, &labels, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    set.save(dir.path()).unwrap();
    let loaded = featsent_core::attacks::AdversarialSet::<f64>::load(dir.path()).unwrap();
    assert_eq!(loaded.true_labels, set.true_labels);
    assert_eq!(loaded.success, set.success);
    assert_eq!(loaded.spec, set.spec);
    for (a, b) in loaded.perturbed.iter().zip(set.perturbed.iter()) {
        assert_eq!(*a as f32, *b as f32);
    }
}

#[test]
fn attack_params_validation_ranges() {
    assert!(AttackParams::Fgsm { eps: 0.0 }.validate().is_err());
    assert!(AttackParams::Pgd { eps: 0.01, eps_step: 0.02, max_iter: 5, random_start: true }
        .validate()
        .is_err());
    assert!(AttackParams::Jsma { theta: 0.0, gamma: 0.1 }.validate().is_err());
    assert!(AttackParams::Jsma { theta: 1.0, gamma: 1.1 }.validate().is_err());
    assert!(AttackParams::AdaptiveComb {
        eps: 0.03,
        eps_step: 0.01,
        max_iter: 5,
        sigma: 1.5,
        random_start: true
    }
    .validate()
    .is_err());
    assert!(AttackParams::ApgdCe { eps: 0.03, max_iter: 1 }.validate().is_err());
    assert!(AttackParams::Deepfool { max_iter: 50, overshoot: 0.02 }.validate().is_ok());
}

#[test]
fn dlr_per_example_matches_scalar_path() {
    let logits = arr2(&[[3.0, 1.0, 0.0], [0.0, 2.0, 4.0]]);
    let v: Array1<f64> = dlr_per_example(&logits, &[0, 2]).unwrap();
    assert!((v[0] - (-2.0 / 3.0)).abs() < 1e-12);
    let expected1: f64 = dlr_loss(&logits.row(1), 2).unwrap();
    assert!((v[1] - expected1).abs() < 1e-12);
}

//! Scratch diagnostic: where do one attack's examples sit in another
//! detector's score and word space? Usage:
//!   score_diag <store-run-dir> <detector-attack> <probe-attack>

use ndarray::Axis;

use featsent_core::attacks::AdversarialSet;
use featsent_core::classifier::load_classifier;
use featsent_core::detector::load_detector;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let run = std::path::PathBuf::from(&args[1]);
    let det_id = &args[2];
    let probe_id = &args[3];
    let (classifier, _) = load_classifier::<f32>(&run.join("checkpoints/classifier")).unwrap();
    let detector = load_detector::<f32>(&run.join(format!("checkpoints/detector-{det_id}"))).unwrap();
    let probe = AdversarialSet::<f32>::load(&run.join(format!("adv_cache/{probe_id}-test"))).unwrap();
    let own = AdversarialSet::<f32>::load(&run.join(format!("adv_cache/{det_id}-test"))).unwrap();

    let words = |imgs: &ndarray::Array4<f32>| {
        let (_, series) = classifier.forward_with_taps(imgs, &detector.plan).unwrap();
        let sentence = detector.sentence(&series).unwrap();
        let p = detector.p_adversarial(&series).unwrap();
        (sentence.words, p)
    };

    let take = |s: &AdversarialSet<f32>, succ_only: bool| {
        let idx: Vec<usize> = if succ_only {
            s.success_indices().into_iter().take(120).collect()
        } else {
            (0..s.len().min(120)).collect()
        };
        featsent_core::classifier::gather(&s.perturbed, &idx)
    };

    let benign = {
        let idx: Vec<usize> = (0..own.len().min(120)).collect();
        featsent_core::classifier::gather(&own.originals, &idx)
    };
    let (wb, pb) = words(&benign);
    let (wo, po) = words(&take(&own, true));
    let (wp, pp) = words(&take(&probe, true));

    let mean = |p: &ndarray::Array1<f32>| p.iter().map(|v| *v as f64).sum::<f64>() / p.len() as f64;
    println!("mean p_adv({det_id} detector): benign {:.4}  own({det_id}) {:.4}  probe({probe_id}) {:.4}",
        mean(&pb), mean(&po), mean(&pp));

    // Per-tap distance of each group's words from the benign centroid,
    // in units of benign per-coordinate spread.
    let l = detector.plan.len();
    for li in 0..l {
        let b = wb.index_axis(Axis(1), li);
        let centroid = b.mean_axis(Axis(0)).unwrap();
        let spread = {
            let mut acc = 0.0f64;
            for row in b.outer_iter() {
                for (v, c) in row.iter().zip(centroid.iter()) {
                    acc += ((v - c) as f64).powi(2);
                }
            }
            (acc / b.nrows() as f64).sqrt()
        };
        let dist = |w: &ndarray::Array3<f32>| {
            let g = w.index_axis(Axis(1), li);
            let mut acc = 0.0f64;
            for row in g.outer_iter() {
                let mut d = 0.0f64;
                for (v, c) in row.iter().zip(centroid.iter()) {
                    d += ((v - c) as f64).powi(2);
                }
                acc += d.sqrt();
            }
            acc / g.nrows() as f64
        };
        println!(
            "tap {}: benign spread {:.3}; own dist {:.3} ({:.2}x); probe dist {:.3} ({:.2}x)",
            detector.plan.layer_ids[li],
            spread,
            dist(&wo),
            dist(&wo) / spread,
            dist(&wp),
            dist(&wp) / spread,
        );
    }
}

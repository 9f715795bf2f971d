//! Deterministic synthetic image corpus: ten classes of oriented
//! sinusoidal gratings with per-class channel mixes, per-image phase
//! jitter, and pixel noise. Learnable by a small convolutional
//! classifier yet close enough between classes that gradient attacks
//! succeed.

use ndarray::Array4;
use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};

use crate::provenance::derive_seed;
use featsent_nn::Real;

use super::ImageDataset;

struct ClassPattern {
    theta: f64,
    freq: f64,
    amp: [f64; 3],
    second_theta: f64,
    second_amp: f64,
    grain: f64,
}

fn class_patterns(classes: usize, seed: u64) -> Vec<ClassPattern> {
    let mut rng = StdRng::seed_from_u64(derive_seed(seed, "synthetic-classes"));
    (0..classes)
        .map(|c| {
            let theta = std::f64::consts::PI * (c as f64 + 0.5) / classes as f64;
            ClassPattern {
                theta,
                freq: 2.0 + (c % 4) as f64,
                amp: [
                    0.6 + 0.4 * rng.random::<f64>(),
                    0.6 + 0.4 * rng.random::<f64>(),
                    0.6 + 0.4 * rng.random::<f64>(),
                ],
                second_theta: theta + std::f64::consts::FRAC_PI_2,
                second_amp: 0.35 + 0.2 * rng.random::<f64>(),
                // Fine-grain texture level is itself a class cue.
                grain: 0.06 + 0.16 * ((c * 3) % classes) as f64 / classes as f64,
            }
        })
        .collect()
}

fn generate<F: Real>(
    name: &str,
    n: usize,
    classes: usize,
    shape: (usize, usize, usize),
    seed: u64,
    salt: &str,
) -> ImageDataset<F> {
    let (c, w, h) = shape;
    let patterns = class_patterns(classes, seed);
    let mut images = Array4::zeros((n, c, w, h));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % classes;
        labels.push(class);
        let p = &patterns[class];
        let mut rng = StdRng::seed_from_u64(derive_seed(seed, &format!("{salt}-{i}")));
        let phase = rng.random::<f64>() * std::f64::consts::TAU;
        let phase2 = rng.random::<f64>() * std::f64::consts::TAU;
        // Per-image jitter keeps classes overlapping: orientation wobble,
        // frequency stretch, amplitude variation, and a distractor
        // pattern borrowed from a random other class.
        let theta = p.theta + 0.35 * (rng.random::<f64>() - 0.5);
        let freq = p.freq * (1.0 + 0.35 * (rng.random::<f64>() - 0.5));
        let amp_jitter = 0.7 + 0.6 * rng.random::<f64>();
        let other = &patterns[rng.random_range(0..classes)];
        let other_weight = 0.50 * rng.random::<f64>();
        let other_phase = rng.random::<f64>() * std::f64::consts::TAU;
        // Smooth clutter instead of white noise, so benign images keep a
        // natural-image-like spectrum with little high-frequency energy.
        let clutter: Vec<(f64, f64, f64, f64, f64)> = (0..5)
            .map(|_| {
                let t = rng.random::<f64>() * std::f64::consts::PI;
                (
                    t.cos(),
                    t.sin(),
                    std::f64::consts::TAU * (0.8 + 3.0 * rng.random::<f64>()) / w as f64,
                    rng.random::<f64>() * std::f64::consts::TAU,
                    0.05 + 0.10 * rng.random::<f64>(),
                )
            })
            .collect();
        let (sin_t, cos_t) = theta.sin_cos();
        let (sin_t2, cos_t2) = p.second_theta.sin_cos();
        let (sin_o, cos_o) = other.theta.sin_cos();
        let scale = std::f64::consts::TAU * freq / w as f64;
        let scale_o = std::f64::consts::TAU * other.freq / w as f64;
        for ch in 0..c {
            let a = p.amp[ch % 3] * amp_jitter;
            let ch_flip = if ch % 2 == 0 { 1.0 } else { -1.0 };
            for x in 0..w {
                for y in 0..h {
                    let u = scale * (cos_t * x as f64 + sin_t * y as f64) + phase;
                    let u2 = scale * 1.5 * (cos_t2 * x as f64 + sin_t2 * y as f64) + phase2;
                    let uo = scale_o * (cos_o * x as f64 + sin_o * y as f64) + other_phase;
                    let mut smooth = 0.0;
                    for &(cn, sn, fr, ph, am) in &clutter {
                        smooth += am * (fr * (cn * x as f64 + sn * y as f64) + ph + ch_flip * 0.3).sin();
                    }
                    let grain = rng.random::<f64>() - 0.5;
                    let v = 0.5
                        + 0.16 * a * u.sin()
                        + 0.08 * p.second_amp * u2.sin()
                        + 0.12 * other_weight * other.amp[ch % 3] * uo.sin()
                        + smooth
                        + 2.0 * p.grain * grain;
                    images[[i, ch, x, y]] = F::c(v.clamp(0.0, 1.0));
                }
            }
        }
    }
    ImageDataset::new(name, images, labels)
}

/// Train and test pools; the test pool uses an independent noise stream.
pub fn synthetic_pools<F: Real>(
    train_n: usize,
    test_n: usize,
    classes: usize,
    shape: (usize, usize, usize),
    seed: u64,
) -> (ImageDataset<F>, ImageDataset<F>) {
    (
        generate("synthetic", train_n, classes, shape, seed, "train"),
        generate("synthetic", test_n, classes, shape, seed, "test"),
    )
}

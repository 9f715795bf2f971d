//! Columnar export of per-tap word vectors for external 2-D projection
//! and plotting: raw little-endian f32 vectors plus a JSON sidecar with
//! the row metadata, and an optional CSV fallback.

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, Array4, Axis};
use serde::{Deserialize, Serialize};

use featsent_nn::Real;

use crate::classifier::{gather, Classifier};
use crate::detector::Detector;
use crate::error::{Error, Result};
use crate::provenance::{read_f32_file, write_f32_file};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WordExport {
    pub rows: usize,
    pub cols: usize,
    pub taps: Vec<String>,
    pub example_index: Vec<u32>,
    pub tap_index: Vec<u32>,
    pub class_label: Vec<u32>,
    pub adversarial: Vec<u8>,
    pub config_hash: String,
}

/// Write one row per (example, tap): the detector-embedded word vectors.
#[allow(clippy::too_many_arguments)]
pub fn export_words<F: Real>(
    detector: &Detector<F>,
    classifier: &Classifier<F>,
    images: &Array4<F>,
    labels: &[usize],
    adversarial: &[bool],
    out_dir: &Path,
    config_hash: &str,
    csv: bool,
) -> Result<WordExport> {
    let n = images.dim().0;
    if n == 0 {
        return Err(Error::Empty("word export input".into()));
    }
    if labels.len() != n || adversarial.len() != n {
        return Err(Error::ShapeMismatch("labels/flags vs images".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let l = detector.plan.len();
    let c_l = detector.embedding.word_dim();
    let mut vectors = Array2::<F>::zeros((n * l, c_l));
    let mut example_index = Vec::with_capacity(n * l);
    let mut tap_index = Vec::with_capacity(n * l);
    let mut class_label = Vec::with_capacity(n * l);
    let mut adv_flags = Vec::with_capacity(n * l);
    let idx: Vec<usize> = (0..n).collect();
    for chunk in idx.chunks(256) {
        let batch = gather(images, chunk);
        let (_, series) = classifier.forward_with_taps(&batch, &detector.plan)?;
        let sentence = detector.sentence(&series)?;
        for (row, &i) in chunk.iter().enumerate() {
            for li in 0..l {
                let out_row = i * l + li;
                vectors
                    .index_axis_mut(Axis(0), out_row)
                    .assign(&sentence.words.index_axis(Axis(0), row).index_axis(Axis(0), li));
                example_index.push(i as u32);
                tap_index.push(li as u32);
                class_label.push(labels[i] as u32);
                adv_flags.push(adversarial[i] as u8);
            }
        }
    }
    write_f32_file(&out_dir.join("vectors.f32"), &vectors.view().into_dyn())?;
    let manifest = WordExport {
        rows: n * l,
        cols: c_l,
        taps: detector.plan.layer_ids.clone(),
        example_index,
        tap_index,
        class_label,
        adversarial: adv_flags,
        config_hash: config_hash.to_string(),
    };
    std::fs::write(out_dir.join("meta.json"), serde_json::to_vec_pretty(&manifest)?)?;
    if csv {
        let mut f = std::io::BufWriter::new(std::fs::File::create(out_dir.join("words.csv"))?);
        write!(f, "example,tap,label,adversarial")?;
        for k in 0..c_l {
            write!(f, ",v{k}")?;
        }
        writeln!(f)?;
        for r in 0..manifest.rows {
            write!(
                f,
                "{},{},{},{}",
                manifest.example_index[r],
                manifest.taps[manifest.tap_index[r] as usize],
                manifest.class_label[r],
                manifest.adversarial[r]
            )?;
            for k in 0..c_l {
                write!(f, ",{}", vectors[[r, k]].as_f32())?;
            }
            writeln!(f)?;
        }
        f.flush()?;
    }
    Ok(manifest)
}

/// Read an export back; vectors round-trip bit-exactly.
pub fn load_words<F: Real>(dir: &Path) -> Result<(WordExport, Array2<F>)> {
    let manifest: WordExport = serde_json::from_slice(&std::fs::read(dir.join("meta.json"))?)?;
    let vectors = read_f32_file::<F>(&dir.join("vectors.f32"), &[manifest.rows, manifest.cols])?
        .into_dimensionality()
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    Ok((manifest, vectors))
}

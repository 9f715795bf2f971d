//! Classifier checkpoints: a directory with one raw little-endian f32
//! parameter file plus a JSON manifest describing shapes and provenance.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::provenance::short_hash;
use featsent_nn::Real;

use super::{build_classifier, Classifier, ClassifierSpec};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierManifest {
    pub spec: ClassifierSpec,
    pub seed: u64,
    pub dataset_fingerprint: String,
    pub arrays: Vec<ArrayEntry>,
    pub checkpoint_hash: String,
    pub config_hash: String,
}

pub fn save_classifier<F: Real>(
    dir: &Path,
    classifier: &Classifier<F>,
    seed: u64,
    dataset_fingerprint: &str,
    config_hash: &str,
) -> Result<ClassifierManifest> {
    std::fs::create_dir_all(dir)?;
    let state = classifier.state_views();
    let mut bytes = Vec::new();
    let mut arrays = Vec::with_capacity(state.len());
    for (name, view) in &state {
        arrays.push(ArrayEntry {
            name: name.clone(),
            shape: view.shape().to_vec(),
        });
        for v in view.iter() {
            bytes.extend_from_slice(&v.as_f32().to_le_bytes());
        }
    }
    std::fs::write(dir.join("params.bin"), &bytes)?;
    let manifest = ClassifierManifest {
        spec: classifier.spec().clone(),
        seed,
        dataset_fingerprint: dataset_fingerprint.to_string(),
        arrays,
        checkpoint_hash: short_hash(&bytes),
        config_hash: config_hash.to_string(),
    };
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_vec_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

pub fn load_classifier<F: Real>(dir: &Path) -> Result<(Classifier<F>, ClassifierManifest)> {
    let manifest: ClassifierManifest =
        serde_json::from_slice(&std::fs::read(dir.join("manifest.json"))?)?;
    let bytes = std::fs::read(dir.join("params.bin"))?;
    if short_hash(&bytes) != manifest.checkpoint_hash {
        return Err(Error::Checkpoint(format!(
            "{} params.bin does not match its manifest hash",
            dir.display()
        )));
    }
    let mut classifier = build_classifier::<F>(&manifest.spec, manifest.seed)?;
    let total: usize = manifest
        .arrays
        .iter()
        .map(|a| a.shape.iter().product::<usize>())
        .sum();
    if bytes.len() != total * 4 {
        return Err(Error::Checkpoint(format!(
            "params.bin holds {} bytes, manifest describes {}",
            bytes.len(),
            total * 4
        )));
    }
    let mut offset = 0usize;
    let state = classifier.state_views_mut();
    if state.len() != manifest.arrays.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {} arrays, model has {}",
            manifest.arrays.len(),
            state.len()
        )));
    }
    for ((name, mut view), entry) in state.into_iter().zip(manifest.arrays.iter()) {
        if name != entry.name || view.shape() != entry.shape.as_slice() {
            return Err(Error::Checkpoint(format!(
                "array {} ({:?}) does not match manifest entry {} ({:?})",
                name,
                view.shape(),
                entry.name,
                entry.shape
            )));
        }
        for v in view.iter_mut() {
            let raw = f32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap());
            *v = F::c(raw as f64);
            offset += 4;
        }
    }
    Ok((classifier, manifest))
}

/// Hash of an on-disk checkpoint without loading the model.
pub fn checkpoint_hash(dir: &Path) -> Result<String> {
    let bytes = std::fs::read(dir.join("params.bin"))?;
    Ok(short_hash(&bytes))
}

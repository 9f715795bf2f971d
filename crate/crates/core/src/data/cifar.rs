//! CIFAR-10/100 binary-format readers.
//!
//! CIFAR-10: `cifar-10-batches-bin/data_batch_{1..5}.bin` and
//! `test_batch.bin`, 3073-byte records (label + 3x32x32 planar RGB).
//! CIFAR-100: `cifar-100-binary/{train,test}.bin`, 3074-byte records
//! (coarse label + fine label + pixels); the fine label is used.

use std::path::Path;

use ndarray::Array4;

use crate::error::{Error, Result};
use featsent_nn::Real;

use super::ImageDataset;

const PIXELS: usize = 3 * 32 * 32;

fn parse_records<F: Real>(
    bytes: &[u8],
    record_len: usize,
    label_offset: usize,
) -> Result<(Vec<F>, Vec<usize>)> {
    if bytes.len() % record_len != 0 {
        return Err(Error::Dataset(format!(
            "file length {} is not a multiple of the {record_len}-byte record",
            bytes.len()
        )));
    }
    let n = bytes.len() / record_len;
    let mut pixels = Vec::with_capacity(n * PIXELS);
    let mut labels = Vec::with_capacity(n);
    for rec in bytes.chunks_exact(record_len) {
        labels.push(rec[label_offset] as usize);
        for &b in &rec[label_offset + 1..label_offset + 1 + PIXELS] {
            pixels.push(F::c(b as f64 / 255.0));
        }
    }
    Ok((pixels, labels))
}

fn dataset_from_files<F: Real>(name: &str, files: &[std::path::PathBuf], record_len: usize, label_offset: usize) -> Result<ImageDataset<F>> {
    let mut all_pixels = Vec::new();
    let mut all_labels = Vec::new();
    for f in files {
        let bytes = std::fs::read(f).map_err(|e| {
            Error::Dataset(format!("cannot read {}: {e}", f.display()))
        })?;
        let (p, l) = parse_records::<F>(&bytes, record_len, label_offset)?;
        all_pixels.extend(p);
        all_labels.extend(l);
    }
    let n = all_labels.len();
    let images = Array4::from_shape_vec((n, 3, 32, 32), all_pixels)
        .map_err(|e| Error::Dataset(format!("bad pixel count: {e}")))?;
    Ok(ImageDataset::new(name, images, all_labels))
}

pub fn load_cifar10_pools<F: Real>(root: &Path) -> Result<(ImageDataset<F>, ImageDataset<F>)> {
    let dir = if root.join("cifar-10-batches-bin").is_dir() {
        root.join("cifar-10-batches-bin")
    } else {
        root.to_path_buf()
    };
    let train_files: Vec<_> = (1..=5)
        .map(|i| dir.join(format!("data_batch_{i}.bin")))
        .collect();
    let train = dataset_from_files("cifar10", &train_files, 3073, 0)?;
    let test = dataset_from_files("cifar10", &[dir.join("test_batch.bin")], 3073, 0)?;
    Ok((train, test))
}

pub fn load_cifar100_pools<F: Real>(root: &Path) -> Result<(ImageDataset<F>, ImageDataset<F>)> {
    let dir = if root.join("cifar-100-binary").is_dir() {
        root.join("cifar-100-binary")
    } else {
        root.to_path_buf()
    };
    // Records carry (coarse, fine) labels; index 1 selects the fine label.
    let train = dataset_from_files("cifar100", &[dir.join("train.bin")], 3074, 1)?;
    let test = dataset_from_files("cifar100", &[dir.join("test.bin")], 3074, 1)?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_cifar10_records() {
        let dir = tempfile::tempdir().unwrap();
        // Two records: label 7 with all-64 pixels, label 2 with all-255.
        let mut bytes = vec![7u8];
        bytes.extend(std::iter::repeat(64u8).take(PIXELS));
        bytes.push(2u8);
        bytes.extend(std::iter::repeat(255u8).take(PIXELS));
        for i in 1..=5 {
            std::fs::write(dir.path().join(format!("data_batch_{i}.bin")), &bytes).unwrap();
        }
        std::fs::write(dir.path().join("test_batch.bin"), &bytes).unwrap();

        let (train, test) = load_cifar10_pools::<f32>(dir.path()).unwrap();
        assert_eq!(train.len(), 10);
        assert_eq!(test.len(), 2);
        assert_eq!(test.labels, vec![7, 2]);
        assert!((test.images[[0, 0, 0, 0]] - 64.0 / 255.0).abs() < 1e-6);
        assert!((test.images[[1, 2, 31, 31]] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_truncated_file() {
        let dir = tempfile::tempdir().unwrap();
        for i in 1..=5 {
            std::fs::write(dir.path().join(format!("data_batch_{i}.bin")), [0u8; 100]).unwrap();
        }
        std::fs::write(dir.path().join("test_batch.bin"), [0u8; 100]).unwrap();
        assert!(load_cifar10_pools::<f32>(dir.path()).is_err());
    }
}

//! Dataset loading and splitting. CIFAR-10/100 and SVHN are read in
//! their standard distribution formats; `synthetic` is a deterministic
//! generated corpus for environments without the real archives.

mod cifar;
mod svhn;
mod synthetic;

pub use cifar::{load_cifar10_pools, load_cifar100_pools};
pub use svhn::load_svhn_pools;
pub use synthetic::synthetic_pools;

use std::path::Path;

use ndarray::Array4;

use crate::error::{Error, Result};
use crate::provenance::ContentHasher;
use featsent_nn::Real;

#[derive(Debug, Clone)]
pub struct ImageDataset<F> {
    pub name: String,
    pub images: Array4<F>,
    pub labels: Vec<usize>,
    pub fingerprint: String,
}

impl<F: Real> ImageDataset<F> {
    pub fn new(name: &str, images: Array4<F>, labels: Vec<usize>) -> Self {
        let mut h = ContentHasher::new();
        h.update_bytes(name.as_bytes());
        for &l in &labels {
            h.update_bytes(&(l as u32).to_le_bytes());
        }
        h.update_array(&images.view().into_dyn());
        let fingerprint = h.finish();
        Self {
            name: name.to_string(),
            images,
            labels,
            fingerprint,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// First-n prefix in canonical order.
    pub fn take(&self, n: usize) -> ImageDataset<F> {
        let n = n.min(self.len());
        let idx: Vec<usize> = (0..n).collect();
        self.select(&idx)
    }

    pub fn select(&self, idx: &[usize]) -> ImageDataset<F> {
        let (_, c, w, h) = self.images.dim();
        let mut images = Array4::zeros((idx.len(), c, w, h));
        for (row, &i) in idx.iter().enumerate() {
            images
                .index_axis_mut(ndarray::Axis(0), row)
                .assign(&self.images.index_axis(ndarray::Axis(0), i));
        }
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        ImageDataset::new(&self.name, images, labels)
    }
}

/// Train/val/test split.
#[derive(Debug, Clone)]
pub struct DataBundle<F> {
    pub train: ImageDataset<F>,
    pub val: ImageDataset<F>,
    pub test: ImageDataset<F>,
}

/// Split sizes; defaults follow the 49,000/1,000/10,000 proportions,
/// rescaled when a subset is requested.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitSizes {
    pub fn full() -> Self {
        Self {
            train: 49_000,
            val: 1_000,
            test: 10_000,
        }
    }

    /// Rescale the default proportions to a train-pool subset of size n.
    pub fn rescaled(subset: usize) -> Self {
        let train = (subset as f64 * 49.0 / 50.0).round() as usize;
        let val = subset - train;
        let test = (subset as f64 * 10.0 / 50.0).round() as usize;
        Self { train, val, test }
    }
}

/// Assemble a bundle from train/test pools: train and val come from the
/// front of the (optionally subset) train pool, test from the test pool.
pub fn make_bundle<F: Real>(
    train_pool: &ImageDataset<F>,
    test_pool: &ImageDataset<F>,
    subset: Option<usize>,
    sizes: Option<SplitSizes>,
) -> Result<DataBundle<F>> {
    let pool = match subset {
        Some(n) => train_pool.take(n),
        None => train_pool.take(train_pool.len()),
    };
    let sizes = sizes.unwrap_or_else(|| match subset {
        Some(n) => SplitSizes::rescaled(n),
        None => SplitSizes::full(),
    });
    if sizes.train + sizes.val > pool.len() {
        return Err(Error::Dataset(format!(
            "train+val ({} + {}) exceeds pool of {}",
            sizes.train,
            sizes.val,
            pool.len()
        )));
    }
    if sizes.test > test_pool.len() {
        return Err(Error::Dataset(format!(
            "test split {} exceeds test pool of {}",
            sizes.test,
            test_pool.len()
        )));
    }
    let train_idx: Vec<usize> = (0..sizes.train).collect();
    let val_idx: Vec<usize> = (sizes.train..sizes.train + sizes.val).collect();
    Ok(DataBundle {
        train: pool.select(&train_idx),
        val: pool.select(&val_idx),
        test: test_pool.take(sizes.test),
    })
}

/// Load a named dataset rooted at `root` (unused for `synthetic`).
pub fn load_dataset<F: Real>(
    name: &str,
    root: &Path,
    subset: Option<usize>,
    sizes: Option<SplitSizes>,
) -> Result<DataBundle<F>> {
    let (train_pool, test_pool) = match name {
        "cifar10" => load_cifar10_pools(root)?,
        "cifar100" => load_cifar100_pools(root)?,
        "svhn" => load_svhn_pools(root)?,
        "synthetic" => {
            let subset_n = subset.unwrap_or(5_000);
            let sizes_n = sizes.unwrap_or_else(|| SplitSizes::rescaled(subset_n));
            synthetic_pools(subset_n.max(sizes_n.train + sizes_n.val), sizes_n.test, 10, (3, 32, 32), 1234)
        }
        other => {
            return Err(Error::Dataset(format!(
                "unknown dataset `{other}` (expected cifar10, cifar100, svhn, or synthetic)"
            )))
        }
    };
    make_bundle(&train_pool, &test_pool, subset, sizes)
}

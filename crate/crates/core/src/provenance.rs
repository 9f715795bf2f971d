//! Seed fan-out, content hashing, and raw little-endian array files.
//! Every derived artifact is tied to its inputs through these hashes.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{ArrayD, ArrayViewD, IxDyn};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use featsent_nn::Real;

/// Derive a component seed from (label, global seed) so adding a stage
/// never shifts another stage's randomness.
pub fn derive_seed(global: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(label.as_bytes());
    h.update(global.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Hex-encoded SHA-256, truncated to 16 characters.
pub fn short_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(16);
    for b in &digest[..8] {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Incremental hasher for streaming array contents.
pub struct ContentHasher(Sha256);

impl ContentHasher {
    pub fn new() -> Self {
        Self(Sha256::new())
    }

    pub fn update_array<F: Real>(&mut self, view: &ArrayViewD<F>) {
        for v in view.iter() {
            self.0.update(v.as_f32().to_le_bytes());
        }
    }

    pub fn update_bytes(&mut self, bytes: &[u8]) {
        self.0.update(bytes);
    }

    pub fn finish(self) -> String {
        let digest = self.0.finalize();
        let mut s = String::with_capacity(16);
        for b in &digest[..8] {
            s.push_str(&format!("{b:02x}"));
        }
        s
    }
}

impl Default for ContentHasher {
    fn default() -> Self {
        Self::new()
    }
}

/// Write an array as raw little-endian f32.
pub fn write_f32_file<F: Real>(path: &Path, view: &ArrayViewD<F>) -> Result<()> {
    let mut buf = Vec::with_capacity(view.len() * 4);
    for v in view.iter() {
        buf.extend_from_slice(&v.as_f32().to_le_bytes());
    }
    std::fs::write(path, buf)?;
    Ok(())
}

/// Read raw little-endian f32 into the given shape.
pub fn read_f32_file<F: Real>(path: &Path, shape: &[usize]) -> Result<ArrayD<F>> {
    let expected: usize = shape.iter().product();
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() != expected * 4 {
        return Err(Error::Checkpoint(format!(
            "{} holds {} bytes, expected {}",
            path.display(),
            bytes.len(),
            expected * 4
        )));
    }
    let mut data = Vec::with_capacity(expected);
    for chunk in bytes.chunks_exact(4) {
        data.push(F::c(f32::from_le_bytes(chunk.try_into().unwrap()) as f64));
    }
    ArrayD::from_shape_vec(IxDyn(shape), data)
        .map_err(|e| Error::Checkpoint(format!("bad shape for {}: {e}", path.display())))
}

pub fn write_i32_file(path: &Path, values: &[i32]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_i32_file(path: &Path) -> Result<Vec<i32>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Checkpoint(format!(
            "{} is not a whole number of i32",
            path.display()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

//! SVHN cropped-digit reader for the MATLAB 5 `.mat` distribution files
//! (`train_32x32.mat` / `test_32x32.mat`). Each file holds `X`, a
//! (32, 32, 3, N) uint8 array in column-major order, and `y`, an (N, 1)
//! uint8 label array with 10 meaning digit zero. Compressed elements
//! (miCOMPRESSED) are inflated with zlib.

use std::io::Read;
use std::path::Path;

use flate2::read::ZlibDecoder;
use ndarray::Array4;

use crate::error::{Error, Result};
use featsent_nn::Real;

use super::ImageDataset;

const MI_INT8: u32 = 1;
const MI_UINT8: u32 = 2;
const MI_COMPRESSED: u32 = 15;
const MI_MATRIX: u32 = 14;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.buf.len().saturating_sub(self.pos)
    }

    fn u32(&mut self) -> Result<u32> {
        if self.remaining() < 4 {
            return Err(Error::Dataset("truncated .mat element".into()));
        }
        let v = u32::from_le_bytes(self.buf[self.pos..self.pos + 4].try_into().unwrap());
        self.pos += 4;
        Ok(v)
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Dataset("truncated .mat data".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    /// Read one data element tag, handling the small-element format.
    fn tag(&mut self) -> Result<(u32, usize, bool)> {
        let first = self.u32()?;
        if first >> 16 != 0 {
            // Small element: size in the upper 16 bits, data packed in the
            // next 4 bytes.
            Ok((first & 0xffff, (first >> 16) as usize, true))
        } else {
            let size = self.u32()? as usize;
            Ok((first, size, false))
        }
    }

    fn element(&mut self) -> Result<(u32, &'a [u8])> {
        let (ty, size, small) = self.tag()?;
        if small {
            let data = self.bytes(4)?;
            return Ok((ty, &data[..size]));
        }
        let data = self.bytes(size)?;
        // Elements are 8-byte aligned.
        let pad = (8 - size % 8) % 8;
        let _ = self.bytes(pad.min(self.remaining()))?;
        Ok((ty, data))
    }
}

struct MatArray {
    name: String,
    dims: Vec<usize>,
    data: Vec<u8>,
}

fn parse_matrix(data: &[u8]) -> Result<MatArray> {
    let mut r = Reader::new(data);
    let (_, _flags) = r.element()?; // array flags
    let (_, dim_bytes) = r.element()?;
    let dims: Vec<usize> = dim_bytes
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let (name_ty, name_bytes) = r.element()?;
    if name_ty != MI_INT8 {
        return Err(Error::Dataset("unexpected .mat name element".into()));
    }
    let name = String::from_utf8_lossy(name_bytes).to_string();
    let (data_ty, payload) = r.element()?;
    if data_ty != MI_UINT8 {
        return Err(Error::Dataset(format!(
            "array `{name}`: expected uint8 payload, got type {data_ty}"
        )));
    }
    Ok(MatArray {
        name,
        dims,
        data: payload.to_vec(),
    })
}

fn parse_mat_file(bytes: &[u8]) -> Result<Vec<MatArray>> {
    if bytes.len() < 128 {
        return Err(Error::Dataset("not a MATLAB 5 file (short header)".into()));
    }
    let mut r = Reader::new(&bytes[128..]);
    let mut arrays = Vec::new();
    while r.remaining() >= 8 {
        let (ty, data) = r.element()?;
        match ty {
            MI_COMPRESSED => {
                let mut inflated = Vec::new();
                ZlibDecoder::new(data)
                    .read_to_end(&mut inflated)
                    .map_err(|e| Error::Dataset(format!("zlib inflate failed: {e}")))?;
                let mut inner = Reader::new(&inflated);
                let (ity, idata) = inner.element()?;
                if ity == MI_MATRIX {
                    arrays.push(parse_matrix(idata)?);
                }
            }
            MI_MATRIX => arrays.push(parse_matrix(data)?),
            _ => {}
        }
    }
    Ok(arrays)
}

fn load_split<F: Real>(path: &Path) -> Result<ImageDataset<F>> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Dataset(format!("cannot read {}: {e}", path.display())))?;
    let arrays = parse_mat_file(&bytes)?;
    let x = arrays
        .iter()
        .find(|a| a.name == "X")
        .ok_or_else(|| Error::Dataset("missing X array".into()))?;
    let y = arrays
        .iter()
        .find(|a| a.name == "y")
        .ok_or_else(|| Error::Dataset("missing y array".into()))?;
    if x.dims.len() != 4 || x.dims[0] != 32 || x.dims[1] != 32 || x.dims[2] != 3 {
        return Err(Error::Dataset(format!("unexpected X dims {:?}", x.dims)));
    }
    let n = x.dims[3];
    if x.data.len() != 32 * 32 * 3 * n {
        return Err(Error::Dataset("X payload length mismatch".into()));
    }
    // Column-major (row, col, channel, image) -> (image, channel, row, col).
    let mut images = Array4::zeros((n, 3, 32, 32));
    for img in 0..n {
        for ch in 0..3 {
            for col in 0..32 {
                for row in 0..32 {
                    let src = row + 32 * (col + 32 * (ch + 3 * img));
                    images[[img, ch, row, col]] = F::c(x.data[src] as f64 / 255.0);
                }
            }
        }
    }
    let labels: Vec<usize> = y
        .data
        .iter()
        .take(n)
        .map(|&v| if v == 10 { 0 } else { v as usize })
        .collect();
    if labels.len() != n {
        return Err(Error::Dataset("label count mismatch".into()));
    }
    Ok(ImageDataset::new("svhn", images, labels))
}

pub fn load_svhn_pools<F: Real>(root: &Path) -> Result<(ImageDataset<F>, ImageDataset<F>)> {
    Ok((
        load_split(&root.join("train_32x32.mat"))?,
        load_split(&root.join("test_32x32.mat"))?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use flate2::write::ZlibEncoder;
    use flate2::Compression;
    use std::io::Write;

    fn element(ty: u32, data: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&ty.to_le_bytes());
        out.extend_from_slice(&(data.len() as u32).to_le_bytes());
        out.extend_from_slice(data);
        while out.len() % 8 != 0 {
            out.push(0);
        }
        out
    }

    fn matrix(name: &str, dims: &[i32], payload: &[u8]) -> Vec<u8> {
        let mut body = Vec::new();
        body.extend(element(6, &[4u8, 0, 0, 0, 0, 0, 0, 0])); // array flags (uint8 class)
        let dim_bytes: Vec<u8> = dims.iter().flat_map(|d| d.to_le_bytes()).collect();
        body.extend(element(5, &dim_bytes));
        body.extend(element(MI_INT8, name.as_bytes()));
        body.extend(element(MI_UINT8, payload));
        element(MI_MATRIX, &body)
    }

    fn write_mat(path: &Path, compress: bool) {
        let n = 2usize;
        let mut x = vec![0u8; 32 * 32 * 3 * n];
        // image 0: all 128; image 1: all 255
        for v in x.iter_mut().take(32 * 32 * 3) {
            *v = 128;
        }
        for v in x.iter_mut().skip(32 * 32 * 3) {
            *v = 255;
        }
        let y = vec![10u8, 3u8];
        let mut body = Vec::new();
        body.extend(matrix("X", &[32, 32, 3, n as i32], &x));
        body.extend(matrix("y", &[n as i32, 1], &y));
        let mut file = vec![0u8; 128];
        file[..4].copy_from_slice(b"MATL");
        if compress {
            for m in [matrix("X", &[32, 32, 3, n as i32], &x), matrix("y", &[n as i32, 1], &y)] {
                let mut enc = ZlibEncoder::new(Vec::new(), Compression::default());
                enc.write_all(&m).unwrap();
                let z = enc.finish().unwrap();
                file.extend(element(MI_COMPRESSED, &z));
            }
        } else {
            file.extend(body);
        }
        std::fs::write(path, file).unwrap();
    }

    #[test]
    fn reads_plain_and_compressed_mat() {
        let dir = tempfile::tempdir().unwrap();
        write_mat(&dir.path().join("train_32x32.mat"), false);
        write_mat(&dir.path().join("test_32x32.mat"), true);
        let (train, test) = load_svhn_pools::<f32>(dir.path()).unwrap();
        assert_eq!(train.len(), 2);
        assert_eq!(test.len(), 2);
        // label 10 remaps to 0
        assert_eq!(train.labels, vec![0, 3]);
        assert!((train.images[[0, 0, 0, 0]] - 128.0 / 255.0).abs() < 1e-6);
        assert!((test.images[[1, 2, 31, 31]] - 1.0).abs() < 1e-6);
    }
}

//! IDX tensors (the MNIST distribution format) and binary datasets.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unsigned-byte IDX tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

/// Row-major bit matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitDataset {
    pub rows: usize,
    pub cols: usize,
    pub bits: Vec<u8>,
}

impl BitDataset {
    pub fn new(rows: usize, cols: usize, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != rows * cols || bits.iter().any(|&b| b > 1) {
            return Err(Error::InvalidArgument("dataset must be rows×cols bits".into()));
        }
        Ok(BitDataset { rows, cols, bits })
    }

    pub fn row(&self, r: usize) -> &[u8] {
        &self.bits[r * self.cols..(r + 1) * self.cols]
    }

    /// Rows `[start, start + n)` as a new dataset.
    pub fn slice(&self, start: usize, n: usize) -> BitDataset {
        let end = (start + n).min(self.rows);
        BitDataset { rows: end - start, cols: self.cols, bits: self.bits[start * self.cols..end * self.cols].to_vec() }
    }
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return Err(Error::Parse { offset: bytes.len(), msg: "file shorter than the 4-byte magic".into() });
    }
    let magic = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    let ndim = match magic {
        0x0000_0801 => 1,
        0x0000_0803 => 3,
        other => return Err(Error::Parse { offset: 0, msg: format!("bad magic 0x{other:08x}") }),
    };
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(Error::Parse { offset: bytes.len(), msg: format!("header needs {header} bytes") });
    }
    let dims: Vec<usize> = (0..ndim)
        .map(|d| {
            let o = 4 + 4 * d;
            u32::from_be_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]) as usize
        })
        .collect();
    let n: usize = dims.iter().product();
    if bytes.len() - header < n {
        return Err(Error::Parse {
            offset: bytes.len(),
            msg: format!("truncated payload: expected {} bytes, found {}", header + n, bytes.len()),
        });
    }
    Ok(IdxArray { dims, data: bytes[header..header + n].to_vec() })
}

pub fn load_idx<P: AsRef<Path>>(path: P) -> Result<IdxArray> {
    parse_idx(&std::fs::read(path)?)
}

/// One row per leading index; a value becomes 1 when it exceeds
/// `threshold × max`.
pub fn binarize(arr: &IdxArray, threshold: f64) -> BitDataset {
    let rows = arr.dims.first().copied().unwrap_or(0);
    let cols = arr.dims[1..].iter().product::<usize>();
    let max = arr.data.iter().copied().max().unwrap_or(0) as f64;
    let cut = threshold * max;
    let bits = arr.data.iter().map(|&x| (x as f64 > cut) as u8).collect();
    BitDataset { rows, cols, bits }
}

/// `n` noisy copies of `n_protos` random binary prototypes of width `m`:
/// prototype bits are on with probability `density`, each copy flips bits
/// with probability `flip`. A stand-in for structured binary data.
pub fn prototype_dataset(m: usize, n: usize, n_protos: usize, density: f64, flip: f64, seed: u64) -> Result<BitDataset> {
    if n_protos == 0 || !(0.0..=1.0).contains(&density) || !(0.0..=1.0).contains(&flip) {
        return Err(Error::InvalidArgument("need prototypes and probabilities in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let protos: Vec<Vec<u8>> = (0..n_protos).map(|_| (0..m).map(|_| rng.random_bool(density) as u8).collect()).collect();
    let mut bits = Vec::with_capacity(n * m);
    for _ in 0..n {
        let p = &protos[rng.random_range(0..n_protos)];
        bits.extend(p.iter().map(|&b| b ^ rng.random_bool(flip) as u8));
    }
    BitDataset::new(n, m, bits)
}

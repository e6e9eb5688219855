//! `RBMPARM1` parameter files: magic, little-endian `u32` M and J, then
//! c, b and row-major W as little-endian `f64`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::rbm::RbmParams;

const MAGIC: &[u8; 8] = b"RBMPARM1";

pub fn encode_rbm(p: &RbmParams) -> Result<Vec<u8>> {
    if p.m == 0 {
        return Err(Error::InvalidArgument("RBM must have at least one visible unit".into()));
    }
    p.validate()?;
    let mut out = Vec::with_capacity(16 + 8 * (p.m + p.j + p.m * p.j));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(p.m as u32).to_le_bytes());
    out.extend_from_slice(&(p.j as u32).to_le_bytes());
    for v in p.c.iter().chain(&p.b).chain(&p.w) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_rbm(bytes: &[u8]) -> Result<RbmParams> {
    if bytes.len() < 16 {
        return Err(Error::Truncated { expected: 16, actual: bytes.len() });
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Parse { offset: 0, msg: "magic is not RBMPARM1".into() });
    }
    let m = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let j = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let n = m + j + m * j;
    let expected = 16 + 8 * n;
    if bytes.len() != expected {
        return Err(Error::Truncated { expected, actual: bytes.len() });
    }
    let vals: Vec<f64> = bytes[16..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    RbmParams::new(m, j, vals[m + j..].to_vec(), vals[..m].to_vec(), vals[m..m + j].to_vec())
}

pub fn save_rbm<P: AsRef<Path>>(path: P, p: &RbmParams) -> Result<()> {
    std::fs::write(path, encode_rbm(p)?)?;
    Ok(())
}

pub fn load_rbm<P: AsRef<Path>>(path: P) -> Result<RbmParams> {
    decode_rbm(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_identical() {
        let p = RbmParams::random(4, 3, 42, 1.0);
        let bytes = encode_rbm(&p).unwrap();
        assert_eq!(bytes.len(), 16 + 8 * (4 + 3 + 12));
        let q = decode_rbm(&bytes).unwrap();
        assert_eq!(p, q);
        assert!(p.w.iter().zip(&q.w).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn truncated_and_bad_magic() {
        let bytes = encode_rbm(&RbmParams::random(4, 3, 42, 1.0)).unwrap();
        match decode_rbm(&bytes[..100]) {
            Err(Error::Truncated { expected: 168, actual: 100 }) => {}
            other => panic!("{other:?}"),
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_rbm(&bad), Err(Error::Parse { offset: 0, .. })));
    }

    #[test]
    fn zero_visible_rejected_on_save() {
        assert!(encode_rbm(&RbmParams::zeros(0, 3)).is_err());
    }
}

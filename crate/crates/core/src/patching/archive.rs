//! Patch archive.
//!
//! ```text
//! magic     "PA01"
//! mlen      u32 LE, then mlen bytes of TOML manifest
//! count     u64 LE
//! n_in      u32 LE   input length
//! n_res     u32 LE   residual length
//! dim       u32 LE
//! count x { sequence u32, frame u32, center dim x u32, input n_in x f32, residual n_res x f32 }
//! ```

use std::path::Path;

use super::{EncodedPatch, PatchPair, TrainingManifest, TrainingSet};
use crate::error::{Error, Result};
use crate::fields::io::check_magic;

pub const PATCH_MAGIC: [u8; 4] = *b"PA01";
const VERSION: u32 = 1;

pub fn encode_archive(set: &TrainingSet) -> Result<Vec<u8>> {
    let manifest = toml::to_string(&set.manifest).map_err(|e| Error::Config(e.to_string()))?;
    let m = &set.manifest;
    let n_in = m.mode.input_len(m.geometry.dim, m.geometry.n);
    let n_res = m.geometry.residual_len();
    let dim = m.geometry.dim;
    let mut buf =
        Vec::with_capacity(32 + manifest.len() + set.pairs.len() * 4 * (2 + dim + n_in + n_res));
    buf.extend_from_slice(&PATCH_MAGIC);
    buf.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
    buf.extend_from_slice(manifest.as_bytes());
    buf.extend_from_slice(&(set.pairs.len() as u64).to_le_bytes());
    for v in [n_in, n_res, dim] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for p in &set.pairs {
        if p.input.vector.len() != n_in || p.residual.len() != n_res || p.input.center.len() != dim
        {
            return Err(Error::DimensionMismatch(
                "pair does not match the archive manifest".into(),
            ));
        }
        buf.extend_from_slice(&(p.sequence as u32).to_le_bytes());
        buf.extend_from_slice(&(p.input.frame as u32).to_le_bytes());
        for &c in &p.input.center {
            buf.extend_from_slice(&(c as u32).to_le_bytes());
        }
        for &v in p.input.vector.iter().chain(&p.residual) {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(buf)
}

/// Little-endian cursor over a byte buffer.
pub(crate) struct Reader<'a> {
    pub(crate) bytes: &'a [u8],
    pub(crate) at: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, at: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.at + n > self.bytes.len() {
            return Err(Error::TruncatedPayload {
                expected: self.at + n,
                found: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_archive(bytes: &[u8]) -> Result<TrainingSet> {
    let mut r = Reader::new(bytes);
    check_magic(r.take(4)?.try_into().unwrap(), PATCH_MAGIC, VERSION)?;
    let mlen = r.u32()? as usize;
    let text = std::str::from_utf8(r.take(mlen)?).map_err(|e| Error::Config(e.to_string()))?;
    let manifest: TrainingManifest =
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let count = r.u64()? as usize;
    let (n_in, n_res, dim) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let g = &manifest.geometry;
    if n_in != manifest.mode.input_len(g.dim, g.n) || n_res != g.residual_len() || dim != g.dim {
        return Err(Error::DimensionMismatch(
            "archive header disagrees with its manifest".into(),
        ));
    }
    let record = 4 * (2 + dim + n_in + n_res);
    let expected = r.at + count * record;
    if bytes.len() != expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: bytes.len(),
        });
    }
    let mut pairs = Vec::with_capacity(count);
    for k in 0..count {
        let sequence = r.u32()? as usize;
        let frame = r.u32()? as usize;
        let center = (0..dim)
            .map(|_| r.u32().map(|c| c as usize))
            .collect::<Result<Vec<_>>>()?;
        let mut vals = Vec::with_capacity(n_in + n_res);
        for j in 0..n_in + n_res {
            let v = f32::from_le_bytes(r.take(4)?.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    index: k * (n_in + n_res) + j,
                });
            }
            vals.push(v as f64);
        }
        let residual = vals.split_off(n_in);
        pairs.push(PatchPair {
            input: EncodedPatch {
                vector: vals,
                center,
                frame,
            },
            residual,
            ratio: g.ratio,
            sequence,
        });
    }
    Ok(TrainingSet { pairs, manifest })
}

pub fn write_archive(set: &TrainingSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_archive(set)?).map_err(|e| Error::io(path, e))
}

pub fn read_archive(path: impl AsRef<Path>) -> Result<TrainingSet> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_archive(&bytes)
}

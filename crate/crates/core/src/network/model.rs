//! Trained model file.
//!
//! ```text
//! magic     "SM01"
//! scales, layers, atoms, n_in, n_res    u32 LE each
//! weights   4 x f64 LE (local, gradient, divergence, regularization)
//! scale     f64 LE   velocity normalization scale
//! mlen      u32 LE, then mlen bytes of TOML metadata
//! params    f32 LE, per scale: B, S_1..S_T, lambda, D_h (row-major)
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LossWeights, MultiscaleNet, NetworkParams};
use crate::error::{Error, Result};
use crate::fields::io::check_magic;
use crate::patching::archive::Reader;
use crate::patching::{EncodingMode, NormalizationInfo, PatchGeometry};

pub const MODEL_MAGIC: [u8; 4] = *b"SM01";
const VERSION: u32 = 1;

/// What a model needs to encode inputs and decode residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub mode: EncodingMode,
    pub geometry: PatchGeometry,
    pub normalization: NormalizationInfo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub net: MultiscaleNet,
    pub weights: LossWeights,
    pub meta: ModelMeta,
}

impl Model {
    pub fn new(net: MultiscaleNet, weights: LossWeights, meta: ModelMeta) -> Result<Self> {
        let g = &meta.geometry;
        if net.n_in() != meta.mode.input_len(g.dim, g.n) || net.n_res() != g.residual_len() {
            return Err(Error::DimensionMismatch(format!(
                "network is {}->{}, patch encoding needs {}->{}",
                net.n_in(),
                net.n_res(),
                meta.mode.input_len(g.dim, g.n),
                g.residual_len()
            )));
        }
        Ok(Model { net, weights, meta })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = toml::to_string(&self.meta).map_err(|e| Error::Config(e.to_string()))?;
        let net = &self.net;
        let mut buf = Vec::with_capacity(64 + meta.len() + 4 * net.len());
        buf.extend_from_slice(&MODEL_MAGIC);
        for v in [
            net.scales.len(),
            net.layers(),
            net.atoms(),
            net.n_in(),
            net.n_res(),
        ] {
            buf.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for w in self.weights.as_array() {
            buf.extend_from_slice(&w.to_le_bytes());
        }
        buf.extend_from_slice(&self.meta.normalization.scale.to_le_bytes());
        buf.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        buf.extend_from_slice(meta.as_bytes());
        for s in net.slices() {
            for &v in s {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        check_magic(r.take(4)?.try_into().unwrap(), MODEL_MAGIC, VERSION)?;
        let mut dims = [0usize; 5];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        let [scales, layers, atoms, n_in, n_res] = dims;
        if scales == 0 || layers == 0 || atoms == 0 {
            return Err(Error::InvalidArgument(format!("bad model header {dims:?}")));
        }
        let mut w = [0.0; 4];
        for v in &mut w {
            *v = r.f64()?;
        }
        let weights = LossWeights {
            local: w[0],
            gradient: w[1],
            divergence: w[2],
            regularization: w[3],
        };
        let scale = r.f64()?;
        let mlen = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(mlen)?).map_err(|e| Error::Config(e.to_string()))?;
        let meta: ModelMeta = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if meta.normalization.scale.to_bits() != scale.to_bits() {
            return Err(Error::Config("header scale disagrees with metadata".into()));
        }
        let mut net = MultiscaleNet {
            scales: (0..scales)
                .map(|_| NetworkParams::zeros(layers, atoms, n_in, n_res))
                .collect(),
        };
        let expected = r.at + 4 * net.len();
        if bytes.len() != expected {
            return Err(Error::TruncatedPayload {
                expected,
                found: bytes.len(),
            });
        }
        let mut k = 0;
        for s in net.slices_mut() {
            for v in s.iter_mut() {
                let x = f32::from_le_bytes(r.take(4)?.try_into().unwrap());
                if !x.is_finite() {
                    return Err(Error::NonFinite { index: k });
                }
                *v = x as f64;
                k += 1;
            }
        }
        let net = MultiscaleNet::new(net.scales)?;
        Model::new(net, weights, meta)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Model::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Model {
        let geometry = PatchGeometry::new(2, 3, 2).unwrap();
        let mode = EncodingMode::velocity_only();
        let n_in = mode.input_len(2, 3);
        let net = MultiscaleNet::seeded(1, 2, 5, n_in, geometry.residual_len(), 0.3, 4);
        let meta = ModelMeta {
            mode,
            geometry,
            normalization: NormalizationInfo::new(1.75).unwrap(),
        };
        Model::new(net, LossWeights::default(), meta).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = sample();
        let bytes = m.to_bytes().unwrap();
        let back = Model::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert_eq!(back.net, m.net.to_f32_precision());
        assert_eq!(back.meta, m.meta);
        assert_eq!(back.weights, m.weights);
        let exact = Model {
            net: m.net.to_f32_precision(),
            ..m
        };
        assert_eq!(
            Model::from_bytes(&exact.to_bytes().unwrap()).unwrap(),
            exact
        );
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = sample();
        m.save(dir.path().join("m.bin")).unwrap();
        let back = Model::load(dir.path().join("m.bin")).unwrap();
        assert_eq!(back.net, m.net.to_f32_precision());
    }

    #[test]
    fn corrupt_files() {
        let bytes = sample().to_bytes().unwrap();
        assert!(matches!(
            Model::from_bytes(&bytes[..bytes.len() - 3]),
            Err(Error::TruncatedPayload { .. })
        ));
        let mut other = bytes.clone();
        other[..4].copy_from_slice(b"SM02");
        assert!(matches!(
            Model::from_bytes(&other),
            Err(Error::VersionMismatch { found: 2, .. })
        ));
        other[..4].copy_from_slice(b"PA01");
        assert!(matches!(
            Model::from_bytes(&other),
            Err(Error::BadMagic { .. })
        ));
    }

    #[test]
    fn network_must_fit_the_encoding() {
        let m = sample();
        let wrong = MultiscaleNet::seeded(0, 1, 2, 3, 4, 0.1, 0);
        assert!(Model::new(wrong, m.weights, m.meta).is_err());
    }
}

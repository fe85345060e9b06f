//! Classical sparse coding: OMP, ISTA and K-SVD dictionary learning.

mod ista;
mod ksvd;
mod omp;

pub use ista::{ista, lasso_objective, soft_threshold, spectral_norm_sq};
pub use ksvd::{ksvd, ksvd_with, KsvdConfig, KsvdResult};
pub use omp::{omp, omp_batch, OmpConfig};

use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::fields::io::{read_raw, write_raw, RawField};

/// Atoms as columns: `signal_dim x atoms`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: Array2<f64>,
}

impl Dictionary {
    /// Takes `atoms` as given; entries must be finite.
    pub fn from_matrix(atoms: Array2<f64>) -> Result<Self> {
        if atoms.ncols() == 0 || atoms.nrows() == 0 {
            return Err(Error::InvalidShape("empty dictionary".into()));
        }
        if let Some(i) = atoms.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: i });
        }
        Ok(Dictionary { atoms })
    }

    /// Scales every column to unit length.
    pub fn normalized(mut atoms: Array2<f64>) -> Result<Self> {
        for (j, mut col) in atoms.axis_iter_mut(Axis(1)).enumerate() {
            let n = col.dot(&col).sqrt();
            if !(n > 0.0) {
                return Err(Error::Degenerate(format!("atom {j} has zero norm")));
            }
            col.mapv_inplace(|v| v / n);
        }
        Dictionary::from_matrix(atoms)
    }

    pub fn atoms(&self) -> &Array2<f64> {
        &self.atoms
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.atoms.view()
    }

    pub fn atom(&self, j: usize) -> ArrayView1<'_, f64> {
        self.atoms.column(j)
    }

    pub fn signal_dim(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn len(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.ncols() == 0
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.atoms
    }

    pub fn to_raw(&self) -> RawField {
        RawField {
            dims: vec![self.signal_dim(), self.len()],
            spacing: 1.0,
            components: vec![self.atoms.iter().cloned().collect()],
        }
    }

    pub fn from_raw(raw: RawField) -> Result<Self> {
        if raw.dims.len() != 2 || raw.components.len() != 1 {
            return Err(Error::InvalidShape(format!(
                "dictionary needs dims (signal_dim, atoms) and one component, got {:?} x {}",
                raw.dims,
                raw.components.len()
            )));
        }
        let (r, c) = (raw.dims[0], raw.dims[1]);
        let m = Array2::from_shape_vec((r, c), raw.components.into_iter().next().unwrap())
            .map_err(|e| Error::InvalidShape(e.to_string()))?;
        Dictionary::from_matrix(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_raw(&self.to_raw(), path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Dictionary::from_raw(read_raw(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::io::encode_raw;

    #[test]
    fn normalizes_columns() {
        let d = Dictionary::normalized(ndarray::array![[3.0, 0.0], [4.0, 2.0]]).unwrap();
        assert_eq!(d.atom(0).to_vec(), vec![0.6, 0.8]);
        assert_eq!(d.atom(1).to_vec(), vec![0.0, 1.0]);
        assert!(Dictionary::normalized(ndarray::array![[0.0], [0.0]]).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dict.vf");
        let d = Dictionary::normalized(Array2::from_shape_fn((7, 4), |(i, j)| {
            (i * 4 + j) as f64 - 9.5
        }))
        .unwrap();
        d.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let back = Dictionary::load(&path).unwrap();
        assert_eq!(back.signal_dim(), 7);
        assert_eq!(back.len(), 4);
        assert_eq!(encode_raw(&back.to_raw()), bytes);
        for (a, b) in back.atoms().iter().zip(d.atoms()) {
            assert!((a - b).abs() < 1e-7);
        }
    }
}

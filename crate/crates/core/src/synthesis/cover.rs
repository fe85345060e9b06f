use crate::error::{Error, Result};
use crate::patching::PatchGeometry;

/// Overlapping patch layout over a coarse grid. Along each axis patches
/// start every `stride` cells, plus one patch flush with the far end.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchCover {
    pub geometry: PatchGeometry,
    pub coarse_dims: Vec<usize>,
    pub stride: usize,
    /// Patch start cells per axis.
    pub starts: Vec<Vec<usize>>,
}

impl PatchCover {
    pub fn new(geometry: PatchGeometry, coarse_dims: &[usize], stride: usize) -> Result<Self> {
        let n = geometry.n;
        if coarse_dims.len() != geometry.dim {
            return Err(Error::DimensionMismatch(format!(
                "{}D patches on a {}D grid",
                geometry.dim,
                coarse_dims.len()
            )));
        }
        if stride == 0 || stride > n {
            return Err(Error::InvalidArgument(format!(
                "stride {stride} must lie in 1..={n}"
            )));
        }
        let mut starts = Vec::with_capacity(coarse_dims.len());
        for &len in coarse_dims {
            if len < n {
                return Err(Error::InvalidShape(format!(
                    "axis of {len} cells is shorter than a patch ({n})"
                )));
            }
            let mut s: Vec<usize> = (0..=len - n).step_by(stride).collect();
            if *s.last().expect("nonempty") != len - n {
                s.push(len - n);
            }
            starts.push(s);
        }
        Ok(PatchCover {
            geometry,
            coarse_dims: coarse_dims.to_vec(),
            stride,
            starts,
        })
    }

    /// Default stride `n - 2`, at least 1.
    pub fn with_default_stride(geometry: PatchGeometry, coarse_dims: &[usize]) -> Result<Self> {
        let stride = geometry.n.saturating_sub(2).max(1);
        PatchCover::new(geometry, coarse_dims, stride)
    }

    pub fn len(&self) -> usize {
        self.starts.iter().map(|s| s.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-axis start indices of patch `k` (row-major over the axes).
    pub fn axis_indices(&self, mut k: usize) -> [usize; 3] {
        let mut out = [0; 3];
        for a in (0..self.starts.len()).rev() {
            out[a] = k % self.starts[a].len();
            k /= self.starts[a].len();
        }
        out
    }

    /// Coarse cell in the middle of patch `k`.
    pub fn center(&self, k: usize) -> Vec<usize> {
        let idx = self.axis_indices(k);
        (0..self.starts.len())
            .map(|a| self.starts[a][idx[a]] + self.geometry.n / 2)
            .collect()
    }

    pub fn centers(&self) -> Vec<Vec<usize>> {
        (0..self.len()).map(|k| self.center(k)).collect()
    }

    pub fn fine_dims(&self) -> Vec<usize> {
        self.coarse_dims
            .iter()
            .map(|d| d * self.geometry.ratio)
            .collect()
    }

    /// For every fine coordinate along `axis`: the patches (axis index) that
    /// contain it and the offset inside each.
    pub(crate) fn axis_contributors(&self, axis: usize) -> Vec<Vec<(usize, usize)>> {
        let r = self.geometry.ratio;
        let side = self.geometry.fine_side();
        let mut out = vec![Vec::new(); self.coarse_dims[axis] * r];
        for (i, &s) in self.starts[axis].iter().enumerate() {
            for o in 0..side {
                out[s * r + o].push((i, o));
            }
        }
        out
    }

    /// Fine-grid position of the middle of a patch along `axis`.
    pub(crate) fn fine_middle(&self, axis: usize, index: usize) -> f64 {
        let side = self.geometry.fine_side() as f64;
        (self.starts[axis][index] * self.geometry.ratio) as f64 + 0.5 * (side - 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covers_every_cell_with_pinned_end() {
        let g = PatchGeometry::new(2, 5, 2).unwrap();
        let c = PatchCover::with_default_stride(g, &[16, 11]).unwrap();
        assert_eq!(c.stride, 3);
        assert_eq!(c.starts[0], vec![0, 3, 6, 9, 11]);
        assert_eq!(c.starts[1], vec![0, 3, 6]);
        assert_eq!(c.len(), 15);
        assert_eq!(c.center(0), vec![2, 2]);
        assert_eq!(c.center(14), vec![13, 8]);
        for a in 0..2 {
            let contrib = c.axis_contributors(a);
            assert!(contrib.iter().all(|v| !v.is_empty()));
        }
        // every center is a valid patch center for the geometry
        for k in 0..c.len() {
            assert!(g.start(&c.center(k), &[16, 11]).is_some());
        }
    }

    #[test]
    fn exact_tiling_adds_no_extra_patch() {
        let g = PatchGeometry::new(2, 4, 1).unwrap();
        let c = PatchCover::new(g, &[12, 4], 4).unwrap();
        assert_eq!(c.starts, vec![vec![0, 4, 8], vec![0]]);
    }

    #[test]
    fn rejects_bad_layouts() {
        let g = PatchGeometry::new(2, 5, 2).unwrap();
        assert!(PatchCover::new(g, &[16, 16], 6).is_err());
        assert!(PatchCover::new(g, &[16, 16], 0).is_err());
        assert!(PatchCover::new(g, &[4, 16], 3).is_err());
        assert!(PatchCover::new(g, &[16, 16, 16], 3).is_err());
    }
}

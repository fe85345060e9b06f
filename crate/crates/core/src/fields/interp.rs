//! Multilinear interpolation of cell-centered samples.

use super::grid::{stride, GridShape, ScalarField, VectorField};
use crate::error::{Error, Result};

/// Interpolates `values` at a continuous index-space position (cell centers
/// sit at integer coordinates). Positions outside the grid are clamped, or
/// wrapped when `periodic` is set.
pub fn sample_linear(values: &[f64], dims: &[usize], pos: &[f64], periodic: bool) -> f64 {
    let d = dims.len();
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    let mut frac = [0.0f64; 3];
    for a in 0..d {
        let n = dims[a];
        let mut x = pos[a];
        if periodic {
            x = x.rem_euclid(n as f64);
            let i = (x.floor() as usize).min(n - 1);
            lo[a] = i;
            hi[a] = (i + 1) % n;
            frac[a] = x - i as f64;
        } else {
            x = x.clamp(0.0, (n - 1) as f64);
            let i = (x.floor() as usize).min(n - 2);
            lo[a] = i;
            hi[a] = i + 1;
            frac[a] = x - i as f64;
        }
    }
    let mut acc = 0.0;
    for corner in 0..(1usize << d) {
        let mut w = 1.0;
        let mut idx = 0;
        for a in 0..d {
            let bit = (corner >> a) & 1;
            let (c, wa) = if bit == 1 {
                (hi[a], frac[a])
            } else {
                (lo[a], 1.0 - frac[a])
            };
            w *= wa;
            idx = idx * dims[a] + c;
        }
        if w != 0.0 {
            acc += w * values[idx];
        }
    }
    acc
}

/// Coarse index-space coordinate of fine cell `j` for an integer `ratio`.
#[inline]
pub fn fine_to_coarse(j: usize, ratio: usize) -> f64 {
    (j as f64 + 0.5) / ratio as f64 - 0.5
}

/// Separable multilinear upsampling of one grid by integer per-axis ratios.
/// Returns the fine values and dims.
pub fn upsample_raw(
    values: &[f64],
    dims: &[usize],
    ratios: &[usize],
) -> Result<(Vec<f64>, Vec<usize>)> {
    if ratios.len() != dims.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} ratios for a {}-D grid",
            ratios.len(),
            dims.len()
        )));
    }
    if let Some(r) = ratios.iter().find(|&&r| r < 1) {
        return Err(Error::InvalidArgument(format!(
            "upsampling ratio must be >= 1, got {r}"
        )));
    }
    let mut cur = values.to_vec();
    let mut cur_dims = dims.to_vec();
    for a in 0..dims.len() {
        let r = ratios[a];
        if r == 1 {
            continue;
        }
        let n = cur_dims[a];
        let m = n * r;
        let s = stride(&cur_dims, a);
        let outer: usize = cur_dims[..a].iter().product();
        let mut next_dims = cur_dims.clone();
        next_dims[a] = m;
        let mut next = vec![0.0; outer * m * s];
        // per fine index along this axis: (lo, hi, frac)
        let taps: Vec<(usize, usize, f64)> = (0..m)
            .map(|j| {
                if n == 1 {
                    return (0, 0, 0.0);
                }
                let x = fine_to_coarse(j, r).clamp(0.0, (n - 1) as f64);
                let i = (x.floor() as usize).min(n - 2);
                (i, i + 1, x - i as f64)
            })
            .collect();
        for o in 0..outer {
            for (j, &(lo, hi, t)) in taps.iter().enumerate() {
                let dst = (o * m + j) * s;
                let src_lo = (o * n + lo) * s;
                let src_hi = (o * n + hi) * s;
                for k in 0..s {
                    next[dst + k] = (1.0 - t) * cur[src_lo + k] + t * cur[src_hi + k];
                }
            }
        }
        cur = next;
        cur_dims = next_dims;
    }
    Ok((cur, cur_dims))
}

fn refined_shape(shape: &GridShape, ratios: &[usize]) -> Result<GridShape> {
    // spacing follows axis 0; uniform ratios keep the grid isotropic
    GridShape::new(
        shape
            .dims()
            .iter()
            .zip(ratios)
            .map(|(d, r)| d * r)
            .collect(),
        shape.spacing() / ratios[0] as f64,
    )
}

pub fn upsample_linear(f: &VectorField, ratios: &[usize]) -> Result<VectorField> {
    let shape = f.shape();
    let mut comps = Vec::with_capacity(shape.ndim());
    for c in f.components() {
        comps.push(upsample_raw(c, shape.dims(), ratios)?.0);
    }
    VectorField::new(refined_shape(shape, ratios)?, comps)
}

pub fn upsample_scalar(f: &ScalarField, ratios: &[usize]) -> Result<ScalarField> {
    let (values, _) = upsample_raw(f.values(), f.shape().dims(), ratios)?;
    ScalarField::new(refined_shape(f.shape(), ratios)?, values)
}

/// Uniform-ratio convenience wrapper.
pub fn upsample_uniform(f: &VectorField, ratio: usize) -> Result<VectorField> {
    upsample_linear(f, &vec![ratio; f.ndim()])
}

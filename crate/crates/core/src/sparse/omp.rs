use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;

use super::Dictionary;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmpConfig {
    pub max_nonzeros: usize,
    /// Stop once `|residual| <= rel_tol * |y|`.
    pub rel_tol: f64,
}

impl Default for OmpConfig {
    fn default() -> Self {
        OmpConfig {
            max_nonzeros: 8,
            rel_tol: 1e-4,
        }
    }
}

/// Solves `G x = b` for symmetric positive definite `G` (row-major, k x k).
fn cholesky_solve(g: &[f64], b: &[f64], k: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; k * k];
    let scale = (0..k)
        .map(|i| g[i * k + i])
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    for i in 0..k {
        for j in 0..=i {
            let mut s = g[i * k + j];
            for p in 0..j {
                s -= l[i * k + p] * l[j * k + p];
            }
            if i == j {
                if s <= 1e-12 * scale {
                    return None;
                }
                l[i * k + i] = s.sqrt();
            } else {
                l[i * k + j] = s / l[j * k + j];
            }
        }
    }
    let mut z = vec![0.0; k];
    for i in 0..k {
        let s: f64 = (0..i).map(|p| l[i * k + p] * z[p]).sum();
        z[i] = (b[i] - s) / l[i * k + i];
    }
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|p| l[p * k + i] * x[p]).sum();
        x[i] = (z[i] - s) / l[i * k + i];
    }
    Some(x)
}

/// Orthogonal matching pursuit. Returns dense weights over all atoms with
/// at most `max_nonzeros` nonzeros; stops early once `|y - D w| <= tol`.
pub fn omp(
    y: ArrayView1<f64>,
    dict: &Dictionary,
    max_nonzeros: usize,
    tol: f64,
) -> Result<Vec<f64>> {
    let d = dict.view();
    if y.len() != d.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "signal has {} entries, atoms have {}",
            y.len(),
            d.nrows()
        )));
    }
    if max_nonzeros < 1 {
        return Err(Error::InvalidArgument(
            "max_nonzeros must be at least 1".into(),
        ));
    }
    let n_atoms = d.ncols();
    let mut w = vec![0.0; n_atoms];
    let mut residual = y.to_owned();
    let mut active: Vec<usize> = Vec::new();
    let mut res_norm = residual.dot(&residual).sqrt();
    while active.len() < max_nonzeros.min(n_atoms) && res_norm > tol {
        let corr = d.t().dot(&residual);
        let mut best = None;
        let mut best_abs = 0.0;
        for (j, &c) in corr.iter().enumerate() {
            if !active.contains(&j) && c.abs() > best_abs {
                best_abs = c.abs();
                best = Some(j);
            }
        }
        let Some(j) = best else { break };
        active.push(j);
        let k = active.len();
        let mut g = vec![0.0; k * k];
        let mut b = vec![0.0; k];
        for (p, &ap) in active.iter().enumerate() {
            b[p] = d.column(ap).dot(&y);
            for (q, &aq) in active.iter().enumerate() {
                g[p * k + q] = d.column(ap).dot(&d.column(aq));
            }
        }
        let x = cholesky_solve(&g, &b, k).ok_or(Error::Singular(k))?;
        residual.assign(&y);
        for (p, &ap) in active.iter().enumerate() {
            residual.scaled_add(-x[p], &d.column(ap));
        }
        let next = residual.dot(&residual).sqrt();
        if next >= res_norm {
            // no progress: the new atom adds nothing, drop it
            active.pop();
            break;
        }
        res_norm = next;
        w.iter_mut().for_each(|v| *v = 0.0);
        for (p, &ap) in active.iter().enumerate() {
            w[ap] = x[p];
        }
    }
    Ok(w)
}

/// Codes every row of `signals` (one signal per row). Output rows hold the
/// weights.
pub fn omp_batch(
    signals: ArrayView2<f64>,
    dict: &Dictionary,
    cfg: &OmpConfig,
) -> Result<Array2<f64>> {
    let rows: Vec<Vec<f64>> = (0..signals.nrows())
        .into_par_iter()
        .map(|i| {
            let y = signals.row(i);
            let tol = cfg.rel_tol * y.dot(&y).sqrt();
            omp(y, dict, cfg.max_nonzeros, tol)
        })
        .collect::<Result<_>>()?;
    let n = dict.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec((signals.nrows(), n), flat).expect("row lengths match atom count"))
}

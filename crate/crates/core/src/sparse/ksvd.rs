use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{omp, Dictionary, OmpConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct KsvdConfig {
    pub atoms: usize,
    pub omp: OmpConfig,
    pub sweeps: usize,
    pub seed: u64,
    /// Starting dictionary; random signals are used when absent.
    pub init: Option<Dictionary>,
}

impl KsvdConfig {
    pub fn new(atoms: usize, max_nonzeros: usize, sweeps: usize, seed: u64) -> Self {
        KsvdConfig {
            atoms,
            omp: OmpConfig {
                max_nonzeros,
                ..OmpConfig::default()
            },
            sweeps,
            seed,
            init: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KsvdResult {
    pub dictionary: Dictionary,
    /// Sparse codes, one row per signal.
    pub codes: Array2<f64>,
    /// Squared Frobenius reconstruction error after each sweep.
    pub errors: Vec<f64>,
}

impl KsvdResult {
    /// Mean over signals of `|y - D w| / |y|` (zero signals skipped).
    pub fn mean_relative_error(&self, signals: ArrayView2<f64>) -> f64 {
        relative_errors(signals, &self.dictionary, &self.codes)
            .iter()
            .sum::<f64>()
            / signals.nrows().max(1) as f64
    }
}

fn relative_errors(signals: ArrayView2<f64>, dict: &Dictionary, codes: &Array2<f64>) -> Vec<f64> {
    let recon = codes.dot(&dict.atoms().t());
    signals
        .axis_iter(Axis(0))
        .zip(recon.axis_iter(Axis(0)))
        .map(|(y, r)| {
            let n = y.dot(&y).sqrt();
            if n == 0.0 {
                0.0
            } else {
                let e = &y - &r;
                e.dot(&e).sqrt() / n
            }
        })
        .collect()
}

/// K-SVD with `atoms` atoms and OMP coding at `max_nonzeros`. Signals are
/// rows of `signals`.
pub fn ksvd(
    signals: ArrayView2<f64>,
    atoms: usize,
    max_nonzeros: usize,
    sweeps: usize,
    seed: u64,
) -> Result<KsvdResult> {
    ksvd_with(signals, &KsvdConfig::new(atoms, max_nonzeros, sweeps, seed))
}

const POWER_ITERS: usize = 30;
/// Atoms closer than this to another atom (in 1 - |cos|) count as duplicates.
const DUPLICATE_TOL: f64 = 1e-10;

/// Dominant right singular vector of `e` (rows x dim) by power iteration on
/// `e^T e`, started from `start`. Starting from the current atom makes the
/// captured energy `|e d|` non-decreasing.
fn rank_one(e: &Array2<f64>, start: Array1<f64>) -> Array1<f64> {
    let mut d = start;
    let mut last = 0.0;
    for _ in 0..POWER_ITERS {
        let x = e.dot(&d);
        let next = e.t().dot(&x);
        let norm = next.dot(&next).sqrt();
        if norm == 0.0 {
            break;
        }
        d = next / norm;
        if (norm - last).abs() <= 1e-13 * norm {
            break;
        }
        last = norm;
    }
    d
}

pub fn ksvd_with(signals: ArrayView2<f64>, cfg: &KsvdConfig) -> Result<KsvdResult> {
    let (m, dim) = signals.dim();
    let n_atoms = cfg.atoms;
    if n_atoms == 0 || m < n_atoms {
        return Err(Error::InvalidArgument(format!(
            "K-SVD needs at least as many signals ({m}) as atoms ({n_atoms}), and one atom"
        )));
    }
    let norms: Vec<f64> = signals
        .axis_iter(Axis(0))
        .map(|y| y.dot(&y).sqrt())
        .collect();
    let nonzero: Vec<usize> = (0..m).filter(|&i| norms[i] > 0.0).collect();
    if nonzero.is_empty() {
        return Err(Error::Degenerate("all training signals are zero".into()));
    }

    let mut dict = match &cfg.init {
        Some(d) => {
            if d.signal_dim() != dim || d.len() != n_atoms {
                return Err(Error::DimensionMismatch(format!(
                    "initial dictionary is {}x{}, expected {dim}x{n_atoms}",
                    d.signal_dim(),
                    d.len()
                )));
            }
            Dictionary::normalized(d.atoms().clone())?
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut a = Array2::zeros((dim, n_atoms));
            let picks = sample(&mut rng, nonzero.len(), n_atoms.min(nonzero.len()));
            for (j, p) in picks.iter().enumerate() {
                a.column_mut(j).assign(&signals.row(nonzero[p]));
            }
            // fewer nonzero signals than atoms: fill with unit vectors
            for j in picks.len()..n_atoms {
                a[[j % dim, j]] = 1.0;
            }
            Dictionary::normalized(a)?
        }
    };

    let mut codes = Array2::<f64>::zeros((m, n_atoms));
    let mut residual = signals.to_owned();
    let mut errors = Vec::with_capacity(cfg.sweeps);
    for _ in 0..cfg.sweeps {
        // sparse coding; keep the previous code when OMP does not improve it
        let coded: Vec<Option<Vec<f64>>> = (0..m)
            .into_par_iter()
            .map(|i| -> Result<Option<Vec<f64>>> {
                let y = signals.row(i);
                let w = omp(y, &dict, cfg.omp.max_nonzeros, cfg.omp.rel_tol * norms[i])?;
                let r = &y - &dict.view().dot(&Array1::from(w.clone()));
                let old = residual.row(i);
                Ok((r.dot(&r) < old.dot(&old)).then_some(w))
            })
            .collect::<Result<_>>()?;
        for (i, w) in coded.into_iter().enumerate() {
            if let Some(w) = w {
                codes.row_mut(i).assign(&Array1::from(w));
            }
        }
        residual = &signals - &codes.dot(&dict.atoms().t());

        let mut atoms = dict.into_matrix();
        let mut reseeded = vec![false; m];
        for j in 0..n_atoms {
            // an atom that duplicates another (up to sign) hands its
            // coefficients over and gets reseeded below
            let twin = (0..n_atoms).find(|&k| {
                k != j && 1.0 - atoms.column(k).dot(&atoms.column(j)).abs() <= DUPLICATE_TOL
            });
            if let Some(k) = twin {
                let sign = atoms.column(k).dot(&atoms.column(j)).signum();
                let (dj, dk) = (atoms.column(j).to_owned(), atoms.column(k).to_owned());
                for i in 0..m {
                    let c = codes[[i, j]];
                    if c != 0.0 {
                        codes[[i, k]] += sign * c;
                        codes[[i, j]] = 0.0;
                        let mut r = residual.row_mut(i);
                        r.scaled_add(c, &dj);
                        r.scaled_add(-sign * c, &dk);
                    }
                }
            }
            let users: Vec<usize> = (0..m).filter(|&i| codes[[i, j]] != 0.0).collect();
            if users.is_empty() {
                // reseed from the worst-represented signal not used yet
                let worst = (0..m)
                    .filter(|&i| !reseeded[i] && norms[i] > 0.0)
                    .map(|i| {
                        let r = residual.row(i);
                        (i, r.dot(&r))
                    })
                    .filter(|&(_, e)| e > 0.0)
                    .max_by(|a, b| a.1.total_cmp(&b.1));
                if let Some((i, _)) = worst {
                    reseeded[i] = true;
                    let r = residual.row(i);
                    let n = r.dot(&r).sqrt();
                    atoms.column_mut(j).assign(&(&r / n));
                }
                continue;
            }
            let old = atoms.column(j).to_owned();
            let mut e = Array2::zeros((users.len(), dim));
            for (k, &i) in users.iter().enumerate() {
                let mut row = e.row_mut(k);
                row.assign(&residual.row(i));
                row.scaled_add(codes[[i, j]], &old);
            }
            let d = rank_one(&e, old);
            let x = e.dot(&d);
            for (k, &i) in users.iter().enumerate() {
                codes[[i, j]] = x[k];
                let mut r = residual.row_mut(i);
                r.assign(&e.row(k));
                r.scaled_add(-x[k], &d);
            }
            atoms.column_mut(j).assign(&d);
        }
        dict = Dictionary::normalized(atoms)?;
        errors.push(residual.iter().map(|v| v * v).sum());
    }
    Ok(KsvdResult {
        dictionary: dict,
        codes,
        errors,
    })
}

//! Evaluation measures: energy spectra, normalized errors, divergence and
//! timing.

mod spectrum;

pub use spectrum::{critical_wavenumber, energy_spectrum, energy_spectrum_with, window};

use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{
    divergence, frame_path, is_interior, list_frames, read_vector, upsample_linear, VectorField,
};
use crate::solver::read_timing_rows;

/// `|a - b|^2 / |b|^2` with `b` the reference. `a` is upsampled linearly
/// first when its grid is an integer refinement away from `b`'s.
pub fn normalized_mse(a: &VectorField, b: &VectorField) -> Result<f64> {
    let (da, db) = (a.shape().dims(), b.shape().dims());
    let up;
    let a = if da == db {
        a
    } else {
        if da.len() != db.len() || da.iter().zip(db).any(|(x, y)| *x == 0 || y % x != 0) {
            return Err(Error::DimensionMismatch(format!(
                "cannot compare {da:?} against {db:?}"
            )));
        }
        let ratios: Vec<usize> = da.iter().zip(db).map(|(x, y)| y / x).collect();
        up = upsample_linear(a, &ratios)?;
        &up
    };
    let mut num = 0.0;
    let mut den = 0.0;
    for (ca, cb) in a.components().iter().zip(b.components()) {
        for (x, y) in ca.iter().zip(cb) {
            num += (x - y) * (x - y);
            den += y * y;
        }
    }
    if den == 0.0 {
        return if num == 0.0 {
            Ok(0.0)
        } else {
            Err(Error::Degenerate("reference field is zero".into()))
        };
    }
    Ok(num / den)
}

/// Normalized error per frame over the frames present in both directories.
pub fn normalized_mse_curve(
    a_dir: impl AsRef<Path>,
    b_dir: impl AsRef<Path>,
) -> Result<Vec<(usize, f64)>> {
    let (a_dir, b_dir) = (a_dir.as_ref(), b_dir.as_ref());
    let b_frames = list_frames(b_dir, "vel");
    let common: Vec<usize> = list_frames(a_dir, "vel")
        .into_iter()
        .filter(|k| b_frames.binary_search(k).is_ok())
        .collect();
    if common.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no common frames in {} and {}",
            a_dir.display(),
            b_dir.display()
        )));
    }
    common
        .par_iter()
        .map(|&k| {
            let a = read_vector(frame_path(a_dir, "vel", k))?;
            let b = read_vector(frame_path(b_dir, "vel", k))?;
            Ok((k, normalized_mse(&a, &b)?))
        })
        .collect()
}

/// RMS of the divergence over interior cells, in grid units (times the cell
/// size), divided by the mean speed. 0 for a field at rest.
pub fn divergence_norm(f: &VectorField) -> f64 {
    let mean = f.mean_speed();
    if mean == 0.0 {
        return 0.0;
    }
    let div = divergence(f);
    let shape = f.shape();
    let d = shape.ndim();
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, v) in div.values().iter().enumerate() {
        let c = shape.coords(i);
        if is_interior(shape, &c[..d]) {
            sum += v * v;
            count += 1;
        }
    }
    if count == 0 {
        return 0.0;
    }
    (sum / count as f64).sqrt() * shape.spacing() / mean
}

/// Per-frame wall-clock seconds of the three stages.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimingReport {
    pub rows: Vec<TimingRow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingRow {
    pub frame: usize,
    pub coarse: f64,
    pub synthesis: f64,
    pub fine: f64,
}

impl TimingRow {
    /// Fine simulation time over coarse simulation plus synthesis time.
    pub fn speedup(&self) -> f64 {
        self.fine / (self.coarse + self.synthesis)
    }
}

pub const TIMING_HEADER: &str = "frame,coarse_seconds,synthesis_seconds,fine_seconds,speedup";

impl TimingReport {
    /// Rows for every synthesized frame; `coarse` and `fine` are indexed
    /// by frame.
    pub fn new(frames: &[usize], synthesis: &[f64], coarse: &[f64], fine: &[f64]) -> Result<Self> {
        if frames.len() != synthesis.len() {
            return Err(Error::DimensionMismatch(
                "one synthesis time per frame".into(),
            ));
        }
        let rows = frames
            .iter()
            .zip(synthesis)
            .map(|(&k, &s)| {
                let (Some(&c), Some(&f)) = (
                    coarse.get(k).filter(|t| !t.is_nan()),
                    fine.get(k).filter(|t| !t.is_nan()),
                ) else {
                    return Err(Error::InvalidArgument(format!(
                        "no simulation timing for frame {k}"
                    )));
                };
                Ok(TimingRow {
                    frame: k,
                    coarse: c,
                    synthesis: s,
                    fine: f,
                })
            })
            .collect::<Result<_>>()?;
        Ok(TimingReport { rows })
    }

    /// Joins the `timing.csv` files of a coarse run, its synthesis and the
    /// fine run.
    pub fn from_dirs(
        coarse: impl AsRef<Path>,
        synthesis: impl AsRef<Path>,
        fine: impl AsRef<Path>,
    ) -> Result<Self> {
        let indexed = |rows: Vec<(usize, f64)>| -> Vec<f64> {
            let mut out = vec![f64::NAN; rows.iter().map(|r| r.0 + 1).max().unwrap_or(0)];
            rows.into_iter().for_each(|(k, t)| out[k] = t);
            out
        };
        let syn = read_timing_rows(synthesis)?;
        let frames: Vec<usize> = syn.iter().map(|r| r.0).collect();
        let seconds: Vec<f64> = syn.iter().map(|r| r.1).collect();
        TimingReport::new(
            &frames,
            &seconds,
            &indexed(read_timing_rows(coarse)?),
            &indexed(read_timing_rows(fine)?),
        )
    }

    fn mean(&self, f: impl Fn(&TimingRow) -> f64) -> f64 {
        self.rows.iter().map(f).sum::<f64>() / self.rows.len().max(1) as f64
    }

    /// Speedup of the mean per-frame times.
    pub fn speedup(&self) -> f64 {
        self.mean(|r| r.fine) / (self.mean(|r| r.coarse) + self.mean(|r| r.synthesis))
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{TIMING_HEADER}\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.frame,
                r.coarse,
                r.synthesis,
                r.fine,
                r.speedup()
            ));
        }
        out
    }
}

pub fn spectrum_csv(rows: &[(usize, f64)]) -> String {
    let mut out = String::from("k,energy\n");
    for (k, e) in rows {
        out.push_str(&format!("{k},{e:e}\n"));
    }
    out
}

/// Two-column CSV with a `frame` column first.
pub fn frame_csv(value_name: &str, rows: &[(usize, f64)]) -> String {
    let mut out = format!("frame,{value_name}\n");
    for (k, v) in rows {
        out.push_str(&format!("{k},{v:e}\n"));
    }
    out
}

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    encode_patch, residual_target, rotate_pair, CoarseFrame, EncodingMode, NormalizationInfo,
    PatchGeometry, PatchPair, Rotation,
};
use crate::error::{Error, Result};
use crate::fields::{count_frames, strain_rate_norm, upsample_uniform, ScalarField, VectorField};
use crate::solver::read_frame;

/// An aligned coarse/fine run.
#[derive(Debug, Clone)]
pub struct PairSequence {
    pub coarse: Vec<VectorField>,
    pub fine: Vec<VectorField>,
    /// Coarse tracer density, used for importance weights.
    pub density: Vec<ScalarField>,
    /// Raw values of the mode's extra codes.
    pub codes: Vec<f64>,
    pub ratio: usize,
}

impl PairSequence {
    pub fn new(
        coarse: Vec<VectorField>,
        fine: Vec<VectorField>,
        density: Vec<ScalarField>,
        codes: Vec<f64>,
    ) -> Result<Self> {
        if coarse.is_empty() || coarse.len() != fine.len() || coarse.len() != density.len() {
            return Err(Error::DimensionMismatch(format!(
                "frame counts differ: {} coarse, {} fine, {} density",
                coarse.len(),
                fine.len(),
                density.len()
            )));
        }
        let cd = coarse[0].shape().dims();
        let fd = fine[0].shape().dims();
        if cd.len() != fd.len() || !fd[0].is_multiple_of(cd[0]) {
            return Err(Error::DimensionMismatch(format!(
                "fine dims {fd:?} vs coarse dims {cd:?}"
            )));
        }
        let ratio = fd[0] / cd[0];
        if cd.iter().zip(fd).any(|(c, f)| c * ratio != *f) {
            return Err(Error::DimensionMismatch(format!(
                "fine dims {fd:?} are not a uniform multiple of coarse dims {cd:?}"
            )));
        }
        let same = |fs: &[VectorField], d: &[usize]| fs.iter().all(|f| f.shape().dims() == d);
        if !same(&coarse, cd) || !same(&fine, fd) || !density.iter().all(|r| r.shape().dims() == cd)
        {
            return Err(Error::DimensionMismatch(
                "frames within a sequence differ in shape".into(),
            ));
        }
        Ok(PairSequence {
            coarse,
            fine,
            density,
            codes,
            ratio,
        })
    }

    /// Reads all frames from two sequence directories.
    pub fn load(
        coarse_dir: impl AsRef<Path>,
        fine_dir: impl AsRef<Path>,
        codes: Vec<f64>,
    ) -> Result<Self> {
        let (cdir, fdir) = (coarse_dir.as_ref(), fine_dir.as_ref());
        let frames = count_frames(cdir, "vel");
        if frames == 0 || count_frames(fdir, "vel") != frames {
            return Err(Error::DimensionMismatch(format!(
                "{} has {frames} frames, {} has {}",
                cdir.display(),
                fdir.display(),
                count_frames(fdir, "vel")
            )));
        }
        let mut coarse = Vec::with_capacity(frames);
        let mut fine = Vec::with_capacity(frames);
        let mut density = Vec::with_capacity(frames);
        for k in 0..frames {
            let (v, r) = read_frame(cdir, k)?;
            coarse.push(v);
            density.push(r);
            fine.push(crate::fields::read_vector(crate::fields::frame_path(
                fdir, "vel", k,
            ))?);
        }
        PairSequence::new(coarse, fine, density, codes)
    }

    pub fn frames(&self) -> usize {
        self.coarse.len()
    }

    pub fn coarse_dims(&self) -> &[usize] {
        self.coarse[0].shape().dims()
    }
}

fn default_n() -> usize {
    5
}
fn default_gamma() -> f64 {
    1.0
}
fn default_darts() -> usize {
    32
}
fn default_rounds() -> usize {
    20_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub count: usize,
    #[serde(default = "default_n")]
    pub n: usize,
    /// Weight of the strain term against the density term.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Poisson-disk radius in coarse cells; `n / 2` when absent.
    #[serde(default)]
    pub radius: Option<f64>,
    /// Darts per frame and round.
    #[serde(default = "default_darts")]
    pub darts_per_frame: usize,
    #[serde(default = "default_rounds")]
    pub max_rounds: usize,
    #[serde(default)]
    pub seed: u64,
}

impl SamplingConfig {
    pub fn new(count: usize, seed: u64) -> Self {
        SamplingConfig {
            count,
            n: default_n(),
            gamma: default_gamma(),
            radius: None,
            darts_per_frame: default_darts(),
            max_rounds: default_rounds(),
            seed,
        }
    }

    pub fn radius(&self) -> f64 {
        self.radius.unwrap_or(self.n as f64 / 2.0)
    }
}

/// Everything needed to reproduce or reuse a sampled training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingManifest {
    pub mode: EncodingMode,
    pub geometry: PatchGeometry,
    pub coarse_dims: Vec<usize>,
    pub normalization: NormalizationInfo,
    pub sampling: SamplingConfig,
    pub sequences: usize,
}

#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub pairs: Vec<PatchPair>,
    pub manifest: TrainingManifest,
}

impl TrainingSet {
    pub fn norm(&self) -> &NormalizationInfo {
        &self.manifest.normalization
    }
}

/// One accepted patch center.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    /// Index into the weight maps passed to [`select_centers`].
    pub slot: usize,
    pub center: Vec<usize>,
}

/// Acceptance probabilities over a grid of candidate centers.
#[derive(Debug, Clone)]
pub struct WeightMap {
    /// Extent of the candidate grid per axis.
    pub extent: Vec<usize>,
    /// Offset added to candidate coordinates to obtain centers.
    pub offset: Vec<usize>,
    pub weights: Vec<f64>,
}

struct FrameDarts {
    rng: ChaCha8Rng,
    occupied: Vec<bool>,
}

fn unravel(extent: &[usize], mut i: usize, out: &mut [usize]) {
    for a in (0..extent.len()).rev() {
        out[a] = i % extent[a];
        i /= extent[a];
    }
}

fn blocked(extent: &[usize], occupied: &[bool], p: &[usize], radius: f64) -> bool {
    let r = radius.ceil() as i64;
    let d = extent.len();
    let span = (2 * r + 1) as usize;
    let total = span.pow(d as u32);
    let r2 = radius * radius;
    'outer: for k in 0..total {
        let mut rem = k;
        let mut idx = 0usize;
        let mut dist2 = 0.0;
        for a in 0..d {
            let off = (rem % span) as i64 - r;
            rem /= span;
            let q = p[a] as i64 + off;
            if q < 0 || q >= extent[a] as i64 {
                continue 'outer;
            }
            dist2 += (off * off) as f64;
            idx = idx * extent[a] + q as usize;
        }
        // idx was built with the axes visited in order, matching row-major
        if dist2 < r2 && occupied[idx] {
            return true;
        }
    }
    false
}

/// Poisson-disk dart throwing over independent weight maps.
///
/// Each map has its own random stream derived from `seed`, so results do
/// not depend on thread scheduling. Rounds of `darts_per_frame` darts are
/// thrown at every map until `count` centers are accepted; selections are
/// ordered by round, then map, then dart.
pub fn select_centers(
    maps: &[WeightMap],
    count: usize,
    radius: f64,
    darts_per_frame: usize,
    max_rounds: usize,
    seed: u64,
) -> Result<Vec<Selection>> {
    let mut state: Vec<FrameDarts> = maps
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            FrameDarts {
                rng,
                occupied: vec![false; m.weights.len()],
            }
        })
        .collect();
    let mut out: Vec<Selection> = Vec::with_capacity(count);
    let any_weight = maps.iter().any(|m| m.weights.iter().any(|&w| w > 0.0));
    if count == 0 {
        return Err(Error::InvalidArgument(
            "sample count must be positive".into(),
        ));
    }
    if !any_weight || darts_per_frame == 0 {
        return Err(Error::SamplingExhausted {
            achieved: 0,
            requested: count,
        });
    }
    let mut idle_rounds = 0;
    for _round in 0..max_rounds {
        let accepted: Vec<Vec<Selection>> = state
            .par_iter_mut()
            .zip(maps.par_iter())
            .enumerate()
            .map(|(slot, (st, m))| {
                let d = m.extent.len();
                let mut p = vec![0usize; d];
                let mut got = Vec::new();
                if m.weights.is_empty() {
                    return got;
                }
                for _ in 0..darts_per_frame {
                    let i = st.rng.random_range(0..m.weights.len());
                    let u: f64 = st.rng.random();
                    if st.occupied[i] || u >= m.weights[i] {
                        continue;
                    }
                    unravel(&m.extent, i, &mut p);
                    if blocked(&m.extent, &st.occupied, &p, radius) {
                        continue;
                    }
                    st.occupied[i] = true;
                    got.push(Selection {
                        slot,
                        center: p.iter().zip(&m.offset).map(|(a, b)| a + b).collect(),
                    });
                }
                got
            })
            .collect();
        let before = out.len();
        for sel in accepted.into_iter().flatten() {
            if out.len() == count {
                break;
            }
            out.push(sel);
        }
        if out.len() == count {
            return Ok(out);
        }
        idle_rounds = if out.len() == before {
            idle_rounds + 1
        } else {
            0
        };
        if idle_rounds >= 200 {
            break;
        }
    }
    Err(Error::SamplingExhausted {
        achieved: out.len(),
        requested: count,
    })
}

/// Mean of `values` over each `n`-box with a valid center, max-normalized.
fn box_means(values: &[f64], dims: &[usize], geometry: &PatchGeometry) -> (Vec<usize>, Vec<f64>) {
    let d = dims.len();
    let n = geometry.n;
    let extent: Vec<usize> = dims.iter().map(|&l| l - n + 1).collect();
    let total: usize = extent.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut p = vec![0usize; d];
    let mut buf = Vec::with_capacity(geometry.coarse_cells());
    for i in 0..total {
        unravel(&extent, i, &mut p);
        buf.clear();
        super::extract_window(values, dims, &p, n, &mut buf);
        out.push(buf.iter().sum::<f64>() / buf.len() as f64);
    }
    let max = out.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        out.iter_mut().for_each(|v| *v /= max);
    }
    (extent, out)
}

/// Acceptance weights `(rho + gamma * strain) / (1 + gamma)` with both terms
/// patch-averaged and max-normalized within the frame.
pub fn importance_map(
    velocity: &VectorField,
    density: &ScalarField,
    geometry: &PatchGeometry,
    gamma: f64,
) -> WeightMap {
    let dims = velocity.shape().dims();
    let (extent, rho) = box_means(density.values(), dims, geometry);
    let weights = if gamma > 0.0 {
        let strain = strain_rate_norm(velocity);
        let (_, s) = box_means(strain.values(), dims, geometry);
        rho.iter()
            .zip(&s)
            .map(|(r, s)| (r + gamma * s) / (1.0 + gamma))
            .collect()
    } else {
        rho
    };
    WeightMap {
        extent,
        offset: vec![geometry.n / 2; dims.len()],
        weights,
    }
}

/// Samples `cfg.count` patch pairs from aligned sequences.
pub fn sample_training_set(
    sequences: &[PairSequence],
    mode: &EncodingMode,
    cfg: &SamplingConfig,
) -> Result<TrainingSet> {
    mode.validate()?;
    let first = sequences
        .first()
        .ok_or_else(|| Error::InvalidArgument("no sequences to sample from".into()))?;
    let coarse_dims = first.coarse_dims().to_vec();
    let d = coarse_dims.len();
    let ratio = first.ratio;
    if sequences
        .iter()
        .any(|s| s.coarse_dims() != coarse_dims.as_slice() || s.ratio != ratio)
    {
        return Err(Error::DimensionMismatch(
            "sequences differ in grid or ratio".into(),
        ));
    }
    if sequences
        .iter()
        .any(|s| s.codes.len() != mode.extra_codes.len())
    {
        return Err(Error::DimensionMismatch(format!(
            "every sequence needs {} code values",
            mode.extra_codes.len()
        )));
    }
    let geometry = PatchGeometry::new(d, cfg.n, ratio)?;
    if coarse_dims.iter().any(|&l| l < cfg.n) {
        return Err(Error::InvalidArgument(format!(
            "patch side {} exceeds grid {coarse_dims:?}",
            cfg.n
        )));
    }

    let scale = sequences
        .iter()
        .flat_map(|s| s.fine.iter())
        .map(|f| f.max_speed())
        .fold(0.0, f64::max);
    if !(scale > 0.0) {
        return Err(Error::Degenerate("fine sequences are at rest".into()));
    }
    let code_scales = (0..mode.extra_codes.len())
        .map(|k| {
            let m = sequences
                .iter()
                .map(|s| s.codes[k].abs())
                .fold(0.0, f64::max);
            if m > 0.0 {
                m
            } else {
                1.0
            }
        })
        .collect();
    let time_scale = sequences
        .iter()
        .map(|s| s.frames())
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let norm = NormalizationInfo {
        scale,
        code_scales,
        time_scale,
    };

    // frames before the history window fills are skipped
    let history = mode.history;
    let slots: Vec<(usize, usize)> = sequences
        .iter()
        .enumerate()
        .flat_map(|(s, seq)| (history..seq.frames()).map(move |t| (s, t)))
        .collect();
    if slots.is_empty() {
        return Err(Error::MissingHistory {
            frame: 0,
            needed: mode.frames_needed(),
        });
    }
    let maps: Vec<WeightMap> = slots
        .par_iter()
        .map(|&(s, t)| {
            importance_map(
                &sequences[s].coarse[t],
                &sequences[s].density[t],
                &geometry,
                cfg.gamma,
            )
        })
        .collect();
    let selections = select_centers(
        &maps,
        cfg.count,
        cfg.radius(),
        cfg.darts_per_frame,
        cfg.max_rounds,
        cfg.seed,
    )?;

    // group by slot so each frame is upsampled once; keep selection order
    let mut by_slot: Vec<Vec<usize>> = vec![Vec::new(); slots.len()];
    for (k, sel) in selections.iter().enumerate() {
        by_slot[sel.slot].push(k);
    }
    let frames: Vec<Vec<CoarseFrame>> = sequences
        .iter()
        .map(|s| {
            if mode.frames_needed() > 1 || mode.include_vorticity {
                s.coarse.iter().cloned().map(CoarseFrame::new).collect()
            } else {
                Vec::new()
            }
        })
        .collect();
    let built: Vec<Vec<(usize, PatchPair)>> = by_slot
        .par_iter()
        .enumerate()
        .filter(|(_, ks)| !ks.is_empty())
        .map(|(slot, ks)| -> Result<Vec<(usize, PatchPair)>> {
            let (s, t) = slots[slot];
            let seq = &sequences[s];
            let up = upsample_uniform(&seq.coarse[t], ratio)?;
            let owned;
            let hist: Vec<&CoarseFrame> = if frames[s].is_empty() {
                owned = CoarseFrame {
                    velocity: seq.coarse[t].clone(),
                    vorticity: Vec::new(),
                };
                vec![&owned]
            } else {
                (0..mode.frames_needed())
                    .map(|k| &frames[s][t - k])
                    .collect()
            };
            ks.iter()
                .map(|&k| {
                    let c = &selections[k].center;
                    let input = encode_patch(&hist, t, c, &geometry, mode, &seq.codes, &norm)?;
                    let residual =
                        residual_target(&seq.fine[t], &up, c, &coarse_dims, &geometry, &norm)?;
                    Ok((
                        k,
                        PatchPair {
                            input,
                            residual,
                            ratio,
                            sequence: s,
                        },
                    ))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut pairs: Vec<Option<PatchPair>> = vec![None; selections.len()];
    for (k, p) in built.into_iter().flatten() {
        pairs[k] = Some(p);
    }
    let pairs = pairs
        .into_iter()
        .map(|p| p.expect("every selection is built"))
        .collect();
    Ok(TrainingSet {
        pairs,
        manifest: TrainingManifest {
            mode: mode.clone(),
            geometry,
            coarse_dims,
            normalization: norm,
            sampling: cfg.clone(),
            sequences: sequences.len(),
        },
    })
}

/// Appends every non-identity rotation of the axis set to each pair.
pub fn augment(set: &TrainingSet) -> Result<Vec<PatchPair>> {
    let m = &set.manifest;
    let rots = Rotation::axis_set(m.geometry.dim);
    let mut out = Vec::with_capacity(set.pairs.len() * rots.len());
    for p in &set.pairs {
        out.push(p.clone());
        for r in &rots[1..] {
            out.push(rotate_pair(p, r, &m.geometry, &m.mode)?);
        }
    }
    Ok(out)
}

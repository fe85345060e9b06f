use super::{
    morton_code, EncodedPatch, EncodingKind, EncodingMode, NormalizationInfo, PatchGeometry,
};
use crate::error::{Error, Result};
use crate::fields::ops::curl_raw;
use crate::fields::VectorField;

/// Coarse velocity of one frame with its vorticity.
#[derive(Debug, Clone)]
pub struct CoarseFrame {
    pub velocity: VectorField,
    pub vorticity: Vec<Vec<f64>>,
}

impl CoarseFrame {
    pub fn new(velocity: VectorField) -> Self {
        let shape = velocity.shape();
        let comps: Vec<&[f64]> = velocity.components().iter().map(|c| c.as_slice()).collect();
        let vorticity = curl_raw(&comps, shape.dims(), shape.spacing());
        CoarseFrame {
            velocity,
            vorticity,
        }
    }
}

/// Copies the box `start .. start + side` of a row-major grid.
pub fn extract_window(
    values: &[f64],
    dims: &[usize],
    start: &[usize],
    side: usize,
    out: &mut Vec<f64>,
) {
    match dims.len() {
        2 => {
            for i in 0..side {
                let row = (start[0] + i) * dims[1] + start[1];
                out.extend_from_slice(&values[row..row + side]);
            }
        }
        _ => {
            for i in 0..side {
                for j in 0..side {
                    let row = ((start[0] + i) * dims[1] + start[1] + j) * dims[2] + start[2];
                    out.extend_from_slice(&values[row..row + side]);
                }
            }
        }
    }
}

/// Encodes the patch centered at `center`. `history` lists frames newest
/// first and must hold at least `mode.frames_needed()` entries; `codes`
/// holds the raw values of `mode.extra_codes`.
#[allow(clippy::too_many_arguments)]
pub fn encode_patch(
    history: &[&CoarseFrame],
    frame: usize,
    center: &[usize],
    geometry: &PatchGeometry,
    mode: &EncodingMode,
    codes: &[f64],
    norm: &NormalizationInfo,
) -> Result<EncodedPatch> {
    let needed = mode.frames_needed();
    if history.len() < needed {
        return Err(Error::MissingHistory { frame, needed });
    }
    let shape = history[0].velocity.shape();
    let dims = shape.dims();
    let start = geometry
        .start(center, dims)
        .ok_or_else(|| Error::PatchOutOfBounds {
            center: center.to_vec(),
            dims: dims.to_vec(),
        })?;
    if codes.len() != mode.extra_codes.len() || norm.code_scales.len() < codes.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} extra codes for {} names and {} scales",
            codes.len(),
            mode.extra_codes.len(),
            norm.code_scales.len()
        )));
    }
    let d = dims.len();
    let n = geometry.n;
    let mut v = Vec::with_capacity(mode.input_len(d, n));
    for f in &history[..needed] {
        if f.velocity.shape() != shape {
            return Err(Error::DimensionMismatch(
                "history frames differ in shape".into(),
            ));
        }
        for c in f.velocity.components() {
            extract_window(c, dims, &start, n, &mut v);
        }
    }
    if mode.include_vorticity {
        for f in &history[..needed] {
            for c in &f.vorticity {
                extract_window(c, dims, &start, n, &mut v);
            }
        }
    }
    let inv = 1.0 / norm.scale;
    v.iter_mut().for_each(|x| *x *= inv);
    if mode.kind == EncodingKind::SpaceTime {
        v.push(morton_code(center, dims)?);
        v.push(frame as f64 / norm.time_scale);
        for (c, s) in codes.iter().zip(&norm.code_scales) {
            v.push(c / s);
        }
    }
    Ok(EncodedPatch {
        vector: v,
        center: center.to_vec(),
        frame,
    })
}

/// Normalized `fine - up` over the fine patch that covers the coarse patch
/// at `center`. `up` is the whole coarse frame linearly upsampled by the
/// geometry's ratio.
pub fn residual_target(
    fine: &VectorField,
    up: &VectorField,
    center: &[usize],
    coarse_dims: &[usize],
    geometry: &PatchGeometry,
    norm: &NormalizationInfo,
) -> Result<Vec<f64>> {
    if fine.shape().dims() != up.shape().dims() {
        return Err(Error::DimensionMismatch(format!(
            "fine dims {:?} vs upsampled dims {:?}",
            fine.shape().dims(),
            up.shape().dims()
        )));
    }
    let start = geometry
        .start(center, coarse_dims)
        .ok_or_else(|| Error::PatchOutOfBounds {
            center: center.to_vec(),
            dims: coarse_dims.to_vec(),
        })?;
    let fstart: Vec<usize> = start.iter().map(|s| s * geometry.ratio).collect();
    let side = geometry.fine_side();
    let dims = fine.shape().dims();
    let mut out = Vec::with_capacity(geometry.residual_len());
    let mut tmp = Vec::with_capacity(geometry.fine_cells());
    let inv = 1.0 / norm.scale;
    for c in 0..dims.len() {
        extract_window(fine.component(c), dims, &fstart, side, &mut out);
        tmp.clear();
        extract_window(up.component(c), dims, &fstart, side, &mut tmp);
        let base = out.len() - tmp.len();
        for (o, u) in out[base..].iter_mut().zip(&tmp) {
            *o = (*o - u) * inv;
        }
    }
    Ok(out)
}

/// Un-normalizes block `index` (of `block_len` values) of an encoded vector.
pub fn decode_block(
    vector: &[f64],
    index: usize,
    block_len: usize,
    norm: &NormalizationInfo,
) -> Vec<f64> {
    vector[index * block_len..(index + 1) * block_len]
        .iter()
        .map(|x| x * norm.scale)
        .collect()
}

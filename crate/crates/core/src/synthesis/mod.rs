//! Applies a trained model to coarse frames: per-patch residual prediction
//! over an overlapping cover, blended into one fine field.

mod blend;
mod cover;

pub use blend::{blend, smooth_block, BlendConfig};
pub use cover::PatchCover;

use std::path::Path;
use std::time::Instant;

use ndarray::{s, Array2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{
    count_frames, frame_path, read_vector, upsample_uniform, write_scalar, write_vector,
    ScalarField, VectorField,
};
use crate::network::{predict_batch, Model, CHUNK};
use crate::patching::{encode_patch, CoarseFrame};
use crate::solver::{
    add_inlet_density, advect_scalar, fluid_mask, inlet_cells, project, Boundary, SequenceManifest,
    TIMING_FILE,
};

/// Residuals of every cover patch, denormalized, component-major.
pub fn predict_patches(
    history: &[&CoarseFrame],
    frame: usize,
    model: &Model,
    cover: &PatchCover,
    codes: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let meta = &model.meta;
    if cover.geometry != meta.geometry {
        return Err(Error::DimensionMismatch(format!(
            "cover geometry {:?} differs from the model's {:?}",
            cover.geometry, meta.geometry
        )));
    }
    let newest = history.first().ok_or(Error::MissingHistory {
        frame,
        needed: meta.mode.frames_needed(),
    })?;
    if newest.velocity.shape().dims() != cover.coarse_dims.as_slice() {
        return Err(Error::DimensionMismatch(format!(
            "coarse frame {:?} does not match the cover {:?}",
            newest.velocity.shape().dims(),
            cover.coarse_dims
        )));
    }
    let inputs: Vec<Vec<f64>> = cover
        .centers()
        .par_iter()
        .map(|c| {
            encode_patch(
                history,
                frame,
                c,
                &meta.geometry,
                &meta.mode,
                codes,
                &meta.normalization,
            )
            .map(|p| p.vector)
        })
        .collect::<Result<_>>()?;
    let n_in = model.net.n_in();
    let flat: Vec<f64> = inputs.into_iter().flatten().collect();
    let inputs = Array2::from_shape_vec((cover.len(), n_in), flat)
        .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
    let scale = meta.normalization.scale;
    let chunks: Vec<Array2<f64>> = (0..cover.len().div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let rows = c * CHUNK..((c + 1) * CHUNK).min(cover.len());
            predict_batch(inputs.slice(s![rows, ..]), &model.net)
        })
        .collect();
    Ok(chunks
        .iter()
        .flat_map(|a| {
            a.rows()
                .into_iter()
                .map(|r| r.iter().map(|v| v * scale).collect::<Vec<f64>>())
        })
        .collect())
}

/// Fine velocity for the newest frame of `history` (newest first):
/// `up(coarse)` plus the blended predicted residuals.
pub fn synthesize_frame(
    history: &[&CoarseFrame],
    frame: usize,
    model: &Model,
    cover: &PatchCover,
    codes: &[f64],
    cfg: &BlendConfig,
) -> Result<VectorField> {
    let patches = predict_patches(history, frame, model, cover, codes)?;
    let residual = blend(cover, &patches, cfg)?;
    let mut up = upsample_uniform(&history[0].velocity, cover.geometry.ratio)?;
    for (u, r) in up.components_mut().iter_mut().zip(&residual) {
        u.iter_mut().zip(r).for_each(|(u, r)| *u += r);
    }
    Ok(up)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisOptions {
    /// Synthesize every `every`-th coarse frame.
    pub every: usize,
    /// Project each synthesized field onto divergence-free fields.
    pub project: bool,
    /// Advect a fine tracer density through the synthesized velocities.
    pub tracer: bool,
    /// Cover stride; `n - 2` when absent.
    pub stride: Option<usize>,
    pub blend: BlendConfig,
    /// Raw extra codes of the sequence (space-time mode).
    pub codes: Vec<f64>,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions {
            every: 1,
            project: false,
            tracer: true,
            stride: None,
            blend: BlendConfig::default(),
            codes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynthesisReport {
    /// Coarse frame indices that were synthesized.
    pub frames: Vec<usize>,
    /// Wall-clock seconds per synthesized frame (prediction, blending and
    /// optional projection).
    pub seconds: Vec<f64>,
}

/// Synthesizes a coarse sequence directory into `out_dir`. Output frame
/// files keep the coarse frame index. The coarse manifest, when present,
/// supplies the scene for the tracer and the solid mask for projection.
pub fn synthesize_sequence(
    coarse_dir: impl AsRef<Path>,
    model: &Model,
    out_dir: impl AsRef<Path>,
    opts: &SynthesisOptions,
) -> Result<SynthesisReport> {
    let (coarse_dir, out_dir) = (coarse_dir.as_ref(), out_dir.as_ref());
    if opts.every == 0 {
        return Err(Error::InvalidArgument("every must be at least 1".into()));
    }
    let frames = count_frames(coarse_dir, "vel");
    let needed = model.meta.mode.frames_needed();
    if frames < needed {
        return Err(Error::MissingHistory {
            frame: frames,
            needed,
        });
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let ratio = model.meta.geometry.ratio;
    let manifest = SequenceManifest::load(coarse_dir).ok();
    let fine_cfg = manifest
        .as_ref()
        .map(|m| m.config.refined(ratio))
        .transpose()?;

    let first = read_vector(frame_path(coarse_dir, "vel", 0))?;
    let cover = match opts.stride {
        Some(s) => PatchCover::new(model.meta.geometry, first.shape().dims(), s)?,
        None => PatchCover::with_default_stride(model.meta.geometry, first.shape().dims())?,
    };
    let fine_shape = upsample_uniform(&first, ratio)?.shape().clone();
    let fluid = match &fine_cfg {
        Some(c) => fluid_mask(c),
        None => vec![true; fine_shape.len()],
    };
    let mut pressure = Vec::new();
    let mut density = vec![0.0; fine_shape.len()];
    let tracer = fine_cfg.as_ref().filter(|_| opts.tracer);
    let inlet = tracer.map(inlet_cells).unwrap_or_default();
    if opts.tracer && tracer.is_none() {
        log::warn!(
            "{}: no manifest, tracer output skipped",
            coarse_dir.display()
        );
    }

    let mut report = SynthesisReport::default();
    let mut window: Vec<(usize, CoarseFrame)> = Vec::new();
    for k in (needed - 1..frames).step_by(opts.every) {
        // newest first; reuse frames still inside the window
        let mut next = Vec::with_capacity(needed);
        for j in (k + 1 - needed..=k).rev() {
            let f = match window.iter().position(|(i, _)| *i == j) {
                Some(p) => window.swap_remove(p).1,
                None => CoarseFrame::new(read_vector(frame_path(coarse_dir, "vel", j))?),
            };
            next.push((j, f));
        }
        window = next;
        let history: Vec<&CoarseFrame> = window.iter().map(|(_, f)| f).collect();

        let start = Instant::now();
        let mut vel = synthesize_frame(&history, k, model, &cover, &opts.codes, &opts.blend)?;
        if opts.project {
            let cfg = fine_cfg.as_ref().map(|c| c.projection).unwrap_or_default();
            project(&mut vel, &fluid, &mut pressure, &cfg)?;
        }
        report.seconds.push(start.elapsed().as_secs_f64());
        report.frames.push(k);
        write_vector(&vel, frame_path(out_dir, "vel", k))?;

        if let Some(cfg) = tracer {
            let dt = cfg.dt * (cfg.steps_per_frame * opts.every) as f64;
            density = advect_scalar(&density, &vel, dt, cfg.boundary == Boundary::Periodic);
            add_inlet_density(&mut density, &inlet, cfg.inlet.density_rate, dt);
            for (d, &f) in density.iter_mut().zip(&fluid) {
                if !f {
                    *d = 0.0;
                }
            }
            write_scalar(
                &ScalarField::new(fine_shape.clone(), density.clone())?,
                frame_path(out_dir, "den", k),
            )?;
        }
        log::debug!("synthesized frame {k}");
    }

    if let (Some(m), Some(cfg)) = (&manifest, fine_cfg) {
        SequenceManifest {
            frames: m.frames,
            ratio,
            config: cfg,
        }
        .save(out_dir)?;
    }
    let mut csv = String::from("frame,seconds\n");
    for (k, t) in report.frames.iter().zip(&report.seconds) {
        csv.push_str(&format!("{k},{t}\n"));
    }
    let path = out_dir.join(TIMING_FILE);
    std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    Ok(report)
}

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{SimConfig, SimState};
use crate::error::{Error, Result};
use crate::fields::{
    frame_path, read_scalar, read_vector, write_scalar, write_vector, ScalarField, VectorField,
};

pub const COARSE_DIR: &str = "coarse";
pub const FINE_DIR: &str = "fine";
pub const MANIFEST_FILE: &str = "manifest";
pub const TIMING_FILE: &str = "timing.csv";

/// Parameters of a written sequence. `ratio` is the refinement relative to
/// the coarse run of the pair (1 for the coarse run itself).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub frames: usize,
    pub ratio: usize,
    pub config: SimConfig,
}

impl SequenceManifest {
    pub fn load(dir: impl AsRef<Path>) -> Result<SequenceManifest> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: SequenceManifest =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        m.config.validate()?;
        Ok(m)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        let text = toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

pub fn read_frame(dir: impl AsRef<Path>, frame: usize) -> Result<(VectorField, ScalarField)> {
    let dir = dir.as_ref();
    Ok((
        read_vector(frame_path(dir, "vel", frame))?,
        read_scalar(frame_path(dir, "den", frame))?,
    ))
}

/// `(frame, seconds)` rows of a `timing.csv`.
pub fn read_timing_rows(dir: impl AsRef<Path>) -> Result<Vec<(usize, f64)>> {
    let path = dir.as_ref().join(TIMING_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let mut it = l.split(',').map(str::trim);
            match (
                it.next().map(str::parse::<usize>),
                it.next().map(str::parse::<f64>),
            ) {
                (Some(Ok(k)), Some(Ok(t))) => Ok((k, t)),
                _ => Err(Error::Config(format!(
                    "{}: malformed line {l:?}",
                    path.display()
                ))),
            }
        })
        .collect()
}

/// Per-frame wall-clock seconds from a `timing.csv` (`frame,seconds`).
pub fn read_timing(dir: impl AsRef<Path>) -> Result<Vec<f64>> {
    Ok(read_timing_rows(dir)?.into_iter().map(|r| r.1).collect())
}

/// Simulates `frames` frames and writes `vel`/`den` sequences, the manifest
/// and per-frame timings into `dir`. Frame k holds the state after
/// `(k + 1) * steps_per_frame` steps.
pub fn run_sequence(
    cfg: &SimConfig,
    ratio: usize,
    frames: usize,
    dir: impl AsRef<Path>,
) -> Result<Vec<f64>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut state = SimState::new(cfg.clone())?;
    let mut timing = Vec::with_capacity(frames);
    for k in 0..frames {
        let start = Instant::now();
        state.advance_frame()?;
        timing.push(start.elapsed().as_secs_f64());
        write_vector(&state.velocity, frame_path(dir, "vel", k))?;
        write_scalar(&state.density, frame_path(dir, "den", k))?;
        log::debug!("{}: frame {k} done", dir.display());
    }
    SequenceManifest {
        frames,
        ratio,
        config: cfg.clone(),
    }
    .save(dir)?;
    let mut csv = String::from("frame,seconds\n");
    for (k, t) in timing.iter().enumerate() {
        csv.push_str(&format!("{k},{t}\n"));
    }
    let path = dir.join(TIMING_FILE);
    std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    Ok(timing)
}

/// Checks that `fine` is `coarse` refined by `ratio`.
pub fn check_pair(coarse: &SimConfig, fine: &SimConfig, ratio: usize) -> Result<()> {
    if ratio < 1 {
        return Err(Error::InvalidArgument("ratio must be >= 1".into()));
    }
    let want = coarse.refined(ratio)?;
    if want.grid.dims() != fine.grid.dims() {
        return Err(Error::DimensionMismatch(format!(
            "fine dims {:?} are not coarse dims {:?} times {ratio}",
            fine.grid.dims(),
            coarse.grid.dims()
        )));
    }
    let mut normalized = fine.clone();
    normalized.grid = want.grid.clone();
    if normalized != want {
        return Err(Error::Config(
            "coarse and fine runs differ in physical parameters".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct PairOutput {
    pub coarse_dir: PathBuf,
    pub fine_dir: PathBuf,
    pub coarse_seconds: Vec<f64>,
    pub fine_seconds: Vec<f64>,
}

/// Runs the coarse scene and its `ratio`-times refined twin, writing them to
/// `outdir/coarse` and `outdir/fine`.
pub fn run_pair(
    cfg_coarse: &SimConfig,
    ratio: usize,
    frames: usize,
    outdir: impl AsRef<Path>,
) -> Result<PairOutput> {
    if ratio < 1 {
        return Err(Error::InvalidArgument("ratio must be >= 1".into()));
    }
    let fine = cfg_coarse.refined(ratio)?;
    check_pair(cfg_coarse, &fine, ratio)?;
    let outdir = outdir.as_ref();
    let coarse_dir = outdir.join(COARSE_DIR);
    let fine_dir = outdir.join(FINE_DIR);
    let coarse_seconds = run_sequence(cfg_coarse, 1, frames, &coarse_dir)?;
    let fine_seconds = run_sequence(&fine, ratio, frames, &fine_dir)?;
    Ok(PairOutput {
        coarse_dir,
        fine_dir,
        coarse_seconds,
        fine_seconds,
    })
}

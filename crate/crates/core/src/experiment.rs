//! End-to-end experiment driver: simulate paired runs, sample patches,
//! train, synthesize a test run and evaluate it, all from one scenario file.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{frame_path, read_vector, upsample_uniform, VectorField};
use crate::metrics::{
    critical_wavenumber, divergence_norm, energy_spectrum, normalized_mse, TimingReport, TimingRow,
};
use crate::network::{
    train_full, train_progressive, write_history, InsertionRecord, Model, ModelMeta, TrainConfig,
    TrainOutput,
};
use crate::patching::{
    augment, sample_training_set, write_archive, EncodingMode, PairSequence, SamplingConfig,
};
use crate::solver::{run_pair, PairOutput, SimConfig};
use crate::synthesis::{synthesize_sequence, BlendConfig, SynthesisOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// One training run; the test run is a small perturbation of it.
    Resimulation,
    /// Several training runs over a parameter range; the test lies inside it.
    Restricted,
    /// Training runs unrelated to the test scene.
    Generalized,
}

/// A change applied to the base scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Variation {
    /// Inlet displacement in coarse cells.
    pub inlet_shift: Vec<f64>,
    /// Factor on the inlet velocity.
    pub inlet_speed: f64,
    pub seed: Option<u64>,
    /// Raw values of the encoding's extra codes for this run.
    pub codes: Vec<f64>,
}

impl Default for Variation {
    fn default() -> Self {
        Variation {
            inlet_shift: Vec::new(),
            inlet_speed: 1.0,
            seed: None,
            codes: Vec::new(),
        }
    }
}

impl Variation {
    pub fn apply(&self, base: &SimConfig) -> Result<SimConfig> {
        let mut c = base.clone();
        let h = base.grid.spacing();
        if !self.inlet_shift.is_empty() {
            if self.inlet_shift.len() != c.inlet.center.len() {
                return Err(Error::Config(format!(
                    "inlet_shift needs {} entries",
                    c.inlet.center.len()
                )));
            }
            for (x, s) in c.inlet.center.iter_mut().zip(&self.inlet_shift) {
                *x += s * h;
            }
        }
        c.inlet
            .velocity
            .iter_mut()
            .for_each(|v| *v *= self.inlet_speed);
        if let Some(s) = self.seed {
            c.seed = s;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisSection {
    pub every: usize,
    pub project: bool,
    pub tracer: bool,
    pub stride: Option<usize>,
    pub blend: BlendConfig,
}

impl Default for SynthesisSection {
    fn default() -> Self {
        let o = SynthesisOptions::default();
        SynthesisSection {
            every: o.every,
            project: o.project,
            tracer: o.tracer,
            stride: o.stride,
            blend: o.blend,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsSection {
    /// Largest accepted `|log10 E_a - log10 E_b|` below the critical wavenumber.
    pub spectrum_tolerance: f64,
    /// Trailing frames over which critical wavenumbers are averaged.
    pub spectrum_frames: usize,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection {
            spectrum_tolerance: 0.3,
            spectrum_frames: 20,
        }
    }
}

fn default_frames() -> usize {
    60
}
fn default_ratio() -> usize {
    4
}
fn default_size() -> usize {
    32
}
fn default_true() -> bool {
    true
}
fn default_train() -> Vec<Variation> {
    vec![Variation::default()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub kind: ScenarioKind,
    #[serde(default = "default_frames")]
    pub frames: usize,
    #[serde(default = "default_ratio")]
    pub ratio: usize,
    /// Side of the built-in coarse plume when `scene` is absent.
    #[serde(default = "default_size")]
    pub size: usize,
    /// Coarse base scene.
    #[serde(default)]
    pub scene: Option<SimConfig>,
    #[serde(default = "default_train")]
    pub train: Vec<Variation>,
    #[serde(default)]
    pub test: Variation,
    pub encoding: EncodingMode,
    pub sampling: SamplingConfig,
    /// Add rotated copies of every pair (not for space-time encodings).
    #[serde(default)]
    pub augment: bool,
    #[serde(default)]
    pub training: TrainConfig,
    /// Also train all layers at once with the same budget, for comparison.
    #[serde(default = "default_true")]
    pub compare_full: bool,
    #[serde(default)]
    pub synthesis: SynthesisSection,
    #[serde(default)]
    pub metrics: MetricsSection,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Scenario> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Scenario> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Scenario::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn base(&self) -> SimConfig {
        self.scene
            .clone()
            .unwrap_or_else(|| SimConfig::plume_2d(self.size))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.encoding.validate()?;
        self.training.validate()?;
        if self.ratio < 1 {
            return bad("ratio must be at least 1".into());
        }
        if self.scene.is_none() && self.size < 4 {
            return bad(format!("size {} is below 4 cells", self.size));
        }
        if self.frames <= self.encoding.frames_needed() {
            return bad(format!(
                "{} frames leave nothing to synthesize",
                self.frames
            ));
        }
        if self.train.is_empty() {
            return bad("at least one training run is needed".into());
        }
        let codes = self.encoding.extra_codes.len();
        if self
            .train
            .iter()
            .chain([&self.test])
            .any(|v| v.codes.len() != codes)
        {
            return bad(format!("every run needs {codes} code values"));
        }
        if self.augment && !self.encoding.allows_rotation() {
            return bad("rotation augmentation does not apply to space-time encodings".into());
        }
        if self.synthesis.every == 0 || self.metrics.spectrum_frames == 0 {
            return bad("synthesis.every and metrics.spectrum_frames must be positive".into());
        }
        match self.kind {
            ScenarioKind::Resimulation if self.train.len() != 1 => {
                bad("a re-simulation scenario trains on exactly one run".into())
            }
            ScenarioKind::Restricted if self.train.len() < 2 => {
                bad("a restricted scenario needs at least two training runs".into())
            }
            ScenarioKind::Restricted => {
                for k in 0..codes {
                    let lo = self
                        .train
                        .iter()
                        .map(|v| v.codes[k])
                        .fold(f64::INFINITY, f64::min);
                    let hi = self
                        .train
                        .iter()
                        .map(|v| v.codes[k])
                        .fold(f64::NEG_INFINITY, f64::max);
                    if !(lo..=hi).contains(&self.test.codes[k]) {
                        return bad(format!("test code {k} lies outside the training range"));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Everything the experiment measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub kind: ScenarioKind,
    pub patches: usize,
    pub progressive_final_loss: f64,
    pub full_final_loss: Option<f64>,
    pub insertions: Vec<InsertionRecord>,
    pub insertions_recovered: bool,
    pub frames_evaluated: usize,
    pub mean_error_synthesized: f64,
    pub mean_error_baseline: f64,
    /// Share of evaluated frames where synthesis beats the upsampled input.
    pub fraction_better: f64,
    pub critical_k_synthesized: f64,
    pub critical_k_baseline: f64,
    pub max_divergence_synthesized: f64,
    pub max_divergence_fine: f64,
    pub mean_coarse_seconds: f64,
    pub mean_synthesis_seconds: f64,
    pub mean_fine_seconds: f64,
    pub speedup: f64,
    /// Wall-clock seconds per pipeline stage.
    pub stage_seconds: Vec<(String, f64)>,
}

impl Summary {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("summary serializes")
    }
}

fn write(path: PathBuf, text: String) -> Result<()> {
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn run_dir(out: &Path, name: &str) -> PathBuf {
    out.join("sims").join(name)
}

fn train_stage(
    set: &crate::patching::TrainingSet,
    sc: &Scenario,
    out: &Path,
) -> Result<(TrainOutput, Option<TrainOutput>)> {
    let prog = train_progressive(set, &sc.training)?;
    write_history(&out.join("history_progressive.csv"), &prog.history)?;
    let mut csv = String::from("layer,loss_before,loss_at_insertion,loss_converged\n");
    for r in &prog.insertions {
        csv.push_str(&format!(
            "{},{:e},{:e},{:e}\n",
            r.layer, r.loss_before, r.loss_at_insertion, r.loss_converged
        ));
    }
    write(out.join("insertions.csv"), csv)?;
    let full = if sc.compare_full {
        let f = train_full(set, &sc.training)?;
        write_history(&out.join("history_full.csv"), &f.history)?;
        Some(f)
    } else {
        None
    };
    Ok((prog, full))
}

struct FrameEval {
    frame: usize,
    err_syn: f64,
    err_base: f64,
    k_syn: usize,
    k_base: usize,
    div_syn: f64,
    div_fine: f64,
    div_base: f64,
}

fn evaluate_frame(
    test: &PairOutput,
    synth_dir: &Path,
    ratio: usize,
    frame: usize,
    tol: f64,
) -> Result<(FrameEval, [Vec<(usize, f64)>; 3])> {
    let syn = read_vector(frame_path(synth_dir, "vel", frame))?;
    let fine = read_vector(frame_path(&test.fine_dir, "vel", frame))?;
    let base: VectorField = upsample_uniform(
        &read_vector(frame_path(&test.coarse_dir, "vel", frame))?,
        ratio,
    )?;
    let (es, ef, eb) = (
        energy_spectrum(&syn),
        energy_spectrum(&fine),
        energy_spectrum(&base),
    );
    let eval = FrameEval {
        frame,
        err_syn: normalized_mse(&syn, &fine)?,
        err_base: normalized_mse(&base, &fine)?,
        k_syn: critical_wavenumber(&es, &ef, tol),
        k_base: critical_wavenumber(&eb, &ef, tol),
        div_syn: divergence_norm(&syn),
        div_fine: divergence_norm(&fine),
        div_base: divergence_norm(&base),
    };
    Ok((eval, [ef, es, eb]))
}

/// Runs a scenario and writes its artifacts into `out`:
/// `sims/`, `patches.sp`, `model.sm`, `synth/`, loss histories and the CSV
/// reports, plus `summary.toml`.
pub fn run_experiment(sc: &Scenario, out: impl AsRef<Path>) -> Result<Summary> {
    sc.validate()?;
    let out = out.as_ref();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write(out.join("scenario.toml"), sc.to_toml())?;
    let base = sc.base();
    let mut stages = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, stages: &mut Vec<(String, f64)>| {
        stages.push((name.to_string(), clock.elapsed().as_secs_f64()));
        log::info!("{name} done in {:.1} s", clock.elapsed().as_secs_f64());
        clock = Instant::now();
    };

    let mut sequences = Vec::with_capacity(sc.train.len());
    for (i, v) in sc.train.iter().enumerate() {
        let pair = run_pair(
            &v.apply(&base)?,
            sc.ratio,
            sc.frames,
            run_dir(out, &format!("train{i}")),
        )?;
        sequences.push(PairSequence::load(
            &pair.coarse_dir,
            &pair.fine_dir,
            v.codes.clone(),
        )?);
    }
    let test = run_pair(
        &sc.test.apply(&base)?,
        sc.ratio,
        sc.frames,
        run_dir(out, "test"),
    )?;
    lap("simulate", &mut stages);

    let mut set = sample_training_set(&sequences, &sc.encoding, &sc.sampling)?;
    drop(sequences);
    if sc.augment {
        set.pairs = augment(&set)?;
    }
    write_archive(&set, out.join("patches.sp"))?;
    lap("sample", &mut stages);

    let (prog, full) = train_stage(&set, sc, out)?;
    let model = Model::new(
        prog.net.clone(),
        sc.training.weights,
        ModelMeta {
            mode: sc.encoding.clone(),
            geometry: set.manifest.geometry,
            normalization: set.manifest.normalization.clone(),
        },
    )?;
    model.save(out.join("model.sm"))?;
    lap("train", &mut stages);

    let synth_dir = out.join("synth");
    let opts = SynthesisOptions {
        every: sc.synthesis.every,
        project: sc.synthesis.project,
        tracer: sc.synthesis.tracer,
        stride: sc.synthesis.stride,
        blend: sc.synthesis.blend,
        codes: sc.test.codes.clone(),
    };
    let report = synthesize_sequence(&test.coarse_dir, &model, &synth_dir, &opts)?;
    lap("synthesize", &mut stages);

    let tol = sc.metrics.spectrum_tolerance;
    let mut evals = Vec::with_capacity(report.frames.len());
    let mut last_spectra = None;
    for &k in &report.frames {
        let (e, spectra) = evaluate_frame(&test, &synth_dir, sc.ratio, k, tol)?;
        evals.push(e);
        last_spectra = Some(spectra);
    }
    let mut csv = String::from("frame,synthesized,baseline\n");
    let mut crit = String::from("frame,synthesized,baseline\n");
    let mut div = String::from("frame,synthesized,fine,baseline\n");
    for e in &evals {
        csv.push_str(&format!("{},{:e},{:e}\n", e.frame, e.err_syn, e.err_base));
        crit.push_str(&format!("{},{},{}\n", e.frame, e.k_syn, e.k_base));
        div.push_str(&format!(
            "{},{:e},{:e},{:e}\n",
            e.frame, e.div_syn, e.div_fine, e.div_base
        ));
    }
    write(out.join("error.csv"), csv)?;
    write(out.join("critical_k.csv"), crit)?;
    write(out.join("divergence.csv"), div)?;
    if let Some([ef, es, eb]) = last_spectra {
        let mut s = String::from("k,fine,synthesized,baseline\n");
        for ((k, f), ((_, y), (_, b))) in ef.iter().zip(es.iter().zip(&eb)) {
            s.push_str(&format!("{k},{f:e},{y:e},{b:e}\n"));
        }
        write(out.join("spectrum.csv"), s)?;
    }
    let timing = TimingReport::new(
        &report.frames,
        &report.seconds,
        &test.coarse_seconds,
        &test.fine_seconds,
    )?;
    write(out.join("timing.csv"), timing.to_csv())?;
    lap("evaluate", &mut stages);

    let n = evals.len().max(1) as f64;
    let tail = &evals[evals.len().saturating_sub(sc.metrics.spectrum_frames)..];
    let tail_mean = |f: fn(&FrameEval) -> usize| {
        tail.iter().map(|e| f(e) as f64).sum::<f64>() / tail.len().max(1) as f64
    };
    let rows = timing.rows.len().max(1) as f64;
    let mean_time = |f: fn(&TimingRow) -> f64| timing.rows.iter().map(f).sum::<f64>() / rows;
    let summary = Summary {
        name: sc.name.clone(),
        kind: sc.kind,
        patches: set.pairs.len(),
        progressive_final_loss: prog.final_train_loss(),
        full_final_loss: full.as_ref().map(|f| f.final_train_loss()),
        insertions_recovered: prog.insertions.iter().all(|r| r.recovered()),
        insertions: prog.insertions.clone(),
        frames_evaluated: evals.len(),
        mean_error_synthesized: evals.iter().map(|e| e.err_syn).sum::<f64>() / n,
        mean_error_baseline: evals.iter().map(|e| e.err_base).sum::<f64>() / n,
        fraction_better: evals.iter().filter(|e| e.err_syn < e.err_base).count() as f64 / n,
        critical_k_synthesized: tail_mean(|e| e.k_syn),
        critical_k_baseline: tail_mean(|e| e.k_base),
        max_divergence_synthesized: evals.iter().map(|e| e.div_syn).fold(0.0, f64::max),
        max_divergence_fine: evals.iter().map(|e| e.div_fine).fold(0.0, f64::max),
        mean_coarse_seconds: mean_time(|r| r.coarse),
        mean_synthesis_seconds: mean_time(|r| r.synthesis),
        mean_fine_seconds: mean_time(|r| r.fine),
        speedup: timing.speedup(),
        stage_seconds: stages,
    };
    write(out.join("summary.toml"), summary.to_toml())?;
    Ok(summary)
}

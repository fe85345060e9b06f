use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use smokesr::experiment::{run_experiment, Scenario, SynthesisSection};
use smokesr::fields::{frame_path, list_frames, read_vector};
use smokesr::metrics::{
    critical_wavenumber, divergence_norm, energy_spectrum_with, frame_csv, normalized_mse_curve,
    spectrum_csv, TimingReport,
};
use smokesr::network::{fit, split_indices, write_history, Batch, Model, ModelMeta, TrainConfig};
use smokesr::patching::{
    augment, read_archive, sample_training_set, write_archive, EncodingMode, PairSequence,
    SamplingConfig,
};
use smokesr::solver::{run_pair, run_sequence, SimConfig, COARSE_DIR, FINE_DIR};
use smokesr::sparse::ksvd;
use smokesr::synthesis::{synthesize_sequence, SynthesisOptions};
use smokesr::Error;

use crate::cli::*;

fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?)
}

fn parse_codes(text: &str) -> Result<Vec<f64>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad code value {v:?}")).into())
        })
        .collect()
}

fn emit(csv: String, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, csv).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimulateFile {
    frames: Option<usize>,
    ratio: Option<usize>,
    size: Option<usize>,
    coarse_only: bool,
    scene: Option<SimConfig>,
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let f: SimulateFile = load(a.config.as_deref())?;
    let plume = |n: usize| {
        if n < 4 {
            return Err(Error::InvalidShape(format!(
                "plume side {n} is below 4 cells"
            )));
        }
        Ok(SimConfig::plume_2d(n))
    };
    let mut scene = match (a.size, f.scene) {
        (Some(n), _) => plume(n)?,
        (None, Some(s)) => s,
        (None, None) => plume(f.size.unwrap_or(32))?,
    };
    if let Some(s) = a.seed {
        scene.seed = s;
    }
    scene.validate()?;
    let frames = a.frames.or(f.frames).unwrap_or(60);
    let ratio = a.ratio.or(f.ratio).unwrap_or(4);
    if a.coarse_only || f.coarse_only {
        run_sequence(&scene, 1, frames, a.out.join(COARSE_DIR))?;
    } else {
        let out = run_pair(&scene, ratio, frames, &a.out)?;
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        log::info!(
            "{frames} frames: {:.4} s/frame coarse, {:.4} s/frame fine",
            mean(&out.coarse_seconds),
            mean(&out.fine_seconds)
        );
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairEntry {
    dir: PathBuf,
    #[serde(default)]
    codes: Vec<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SampleFile {
    encoding: Option<EncodingMode>,
    sampling: Option<SamplingConfig>,
    augment: bool,
    pairs: Vec<PairEntry>,
}

pub fn sample(a: &SampleArgs) -> Result<()> {
    let f: SampleFile = load(a.config.as_deref())?;
    let mut mode = f.encoding.unwrap_or_else(EncodingMode::velocity_only);
    if let Some(m) = a.mode {
        mode = EncodingMode::from_kind(m.into());
    }
    if let Some(h) = a.history {
        mode.history = h;
    }
    if a.vorticity {
        mode.include_vorticity = true;
    }
    if !a.extra_codes.is_empty() {
        mode.extra_codes = a.extra_codes.clone();
    }
    let mut cfg = f.sampling.unwrap_or_else(|| SamplingConfig::new(4096, 0));
    cfg.count = a.count.unwrap_or(cfg.count);
    cfg.n = a.n.unwrap_or(cfg.n);
    cfg.radius = a.radius.or(cfg.radius);
    cfg.gamma = a.gamma.unwrap_or(cfg.gamma);
    cfg.seed = a.seed.unwrap_or(cfg.seed);

    let pairs: Vec<PairEntry> = if a.pairs.is_empty() {
        f.pairs
    } else {
        if !a.codes.is_empty() && a.codes.len() != a.pairs.len() {
            return Err(Error::InvalidArgument("give --codes once per --pair".into()).into());
        }
        a.pairs
            .iter()
            .enumerate()
            .map(|(i, d)| {
                Ok(PairEntry {
                    dir: d.clone(),
                    codes: a
                        .codes
                        .get(i)
                        .map(|c| parse_codes(c))
                        .transpose()?
                        .unwrap_or_default(),
                })
            })
            .collect::<Result<_>>()?
    };
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no simulation pairs given".into()).into());
    }
    let sequences = pairs
        .iter()
        .map(|p| {
            PairSequence::load(
                p.dir.join(COARSE_DIR),
                p.dir.join(FINE_DIR),
                p.codes.clone(),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut set = sample_training_set(&sequences, &mode, &cfg)?;
    if a.augment || f.augment {
        if !mode.allows_rotation() {
            return Err(Error::Config(
                "rotation augmentation does not apply to space-time encodings".into(),
            )
            .into());
        }
        set.pairs = augment(&set)?;
    }
    write_archive(&set, &a.out)?;
    log::info!(
        "wrote {} patch pairs to {}",
        set.pairs.len(),
        a.out.display()
    );
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct KsvdFile {
    atoms: usize,
    sparsity: usize,
    sweeps: usize,
    seed: u64,
}

impl Default for KsvdFile {
    fn default() -> Self {
        KsvdFile {
            atoms: 128,
            sparsity: 8,
            sweeps: 10,
            seed: 0,
        }
    }
}

pub fn ksvd_cmd(a: &KsvdArgs) -> Result<()> {
    let f: KsvdFile = load(a.config.as_deref())?;
    let set = read_archive(&a.patches)?;
    let signals = Batch::from_pairs(&set.pairs)?.targets;
    let (atoms, sparsity) = (a.atoms.unwrap_or(f.atoms), a.sparsity.unwrap_or(f.sparsity));
    let res = ksvd(
        signals.view(),
        atoms,
        sparsity,
        a.sweeps.unwrap_or(f.sweeps),
        a.seed.unwrap_or(f.seed),
    )?;
    res.dictionary.save(&a.out)?;
    println!("atoms,sparsity,signals,mean_relative_error");
    println!(
        "{atoms},{sparsity},{},{}",
        signals.nrows(),
        res.mean_relative_error(signals.view())
    );
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(default)]
struct TrainFile {
    progressive: bool,
    #[serde(flatten)]
    training: TrainConfig,
}

impl Default for TrainFile {
    fn default() -> Self {
        TrainFile {
            progressive: true,
            training: TrainConfig::default(),
        }
    }
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let f: TrainFile = load(a.config.as_deref())?;
    let mut cfg = f.training;
    cfg.layers = a.layers.unwrap_or(cfg.layers);
    cfg.atoms = a.atoms.unwrap_or(cfg.atoms);
    cfg.scales = a.scales.unwrap_or(cfg.scales);
    cfg.max_epochs = a.epochs.unwrap_or(cfg.max_epochs);
    cfg.learning_rate = a.learning_rate.unwrap_or(cfg.learning_rate);
    cfg.batch_size = a.batch_size.unwrap_or(cfg.batch_size);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    let progressive = f.progressive && !a.full;

    let set = read_archive(&a.patches)?;
    let (tr, va) = split_indices(&set.pairs, set.manifest.mode.kind, &cfg)?;
    let all = Batch::from_pairs(&set.pairs)?;
    let out = fit(
        &all.select(&tr),
        &all.select(&va),
        &set.manifest.geometry,
        &cfg,
        progressive,
    )?;
    if let Some(h) = &a.history {
        write_history(h, &out.history)?;
    }
    let meta = ModelMeta {
        mode: set.manifest.mode.clone(),
        geometry: set.manifest.geometry,
        normalization: set.manifest.normalization.clone(),
    };
    log::info!(
        "final training loss {:e}, best validation loss {:e}",
        out.final_train_loss(),
        out.best_val
    );
    Model::new(out.net, cfg.weights, meta)?.save(&a.out)?;
    Ok(())
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct SynthesizeFile {
    #[serde(flatten)]
    synthesis: SynthesisSection,
    codes: Vec<f64>,
}

pub fn synthesize(a: &SynthesizeArgs) -> Result<()> {
    let f: SynthesizeFile = load(a.config.as_deref())?;
    let s = f.synthesis;
    let opts = SynthesisOptions {
        every: a.every.unwrap_or(s.every),
        project: a.project || s.project,
        tracer: !a.no_tracer && s.tracer,
        stride: a.stride.or(s.stride),
        blend: s.blend,
        codes: a
            .codes
            .as_deref()
            .map(parse_codes)
            .transpose()?
            .unwrap_or(f.codes),
    };
    let model = Model::load(&a.model)?;
    let report = synthesize_sequence(&a.coarse, &model, &a.out, &opts)?;
    log::info!(
        "synthesized {} frames into {}",
        report.frames.len(),
        a.out.display()
    );
    Ok(())
}

pub fn eval(c: &EvalCommand) -> Result<()> {
    match c {
        EvalCommand::Spectrum(a) => {
            let e = energy_spectrum_with(&read_vector(&a.field)?, !a.raw);
            match &a.reference {
                None => emit(spectrum_csv(&e), a.out.as_deref()),
                Some(r) => {
                    let er = energy_spectrum_with(&read_vector(r)?, !a.raw);
                    if er.len() != e.len() {
                        return Err(Error::DimensionMismatch(
                            "field and reference grids differ".into(),
                        )
                        .into());
                    }
                    let mut csv = String::from("k,energy,reference\n");
                    for ((k, v), (_, w)) in e.iter().zip(&er) {
                        csv.push_str(&format!("{k},{v:e},{w:e}\n"));
                    }
                    eprintln!(
                        "critical wavenumber: {}",
                        critical_wavenumber(&e, &er, a.tolerance)
                    );
                    emit(csv, a.out.as_deref())
                }
            }
        }
        EvalCommand::Error(a) => emit(
            frame_csv("nmse", &normalized_mse_curve(&a.synth, &a.reference)?),
            a.out.as_deref(),
        ),
        EvalCommand::Div(a) => {
            let frames = list_frames(&a.dir, "vel");
            if frames.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "no velocity frames in {}",
                    a.dir.display()
                ))
                .into());
            }
            let rows = frames
                .into_iter()
                .map(|k| {
                    Ok((
                        k,
                        divergence_norm(&read_vector(frame_path(&a.dir, "vel", k))?),
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            emit(frame_csv("divergence_norm", &rows), a.out.as_deref())
        }
        EvalCommand::Timing(a) => {
            let rep = TimingReport::from_dirs(&a.coarse, &a.synth, &a.fine)?;
            eprintln!("mean speedup: {:.3}", rep.speedup());
            emit(rep.to_csv(), a.out.as_deref())
        }
    }
}

pub fn experiment(a: &ExperimentArgs) -> Result<()> {
    let mut sc = Scenario::load(&a.scenario)?;
    if let Some(f) = a.frames {
        sc.frames = f;
    }
    if let Some(e) = a.epochs {
        sc.training.max_epochs = e;
    }
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| Path::new("report").join(&sc.name));
    let summary = run_experiment(&sc, &out)?;
    print!("{}", summary.to_toml());
    Ok(())
}

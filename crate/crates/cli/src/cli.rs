use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use smokesr::patching::EncodingKind;

/// Dictionary-based upsampling of smoke simulations.
#[derive(Debug, Parser)]
#[command(name = "smokesr", version, about, propagate_version = true)]
pub struct Cli {
    /// Worker threads; 1 makes every stage bit-deterministic.
    #[arg(long, global = true, env = "SMOKESR_THREADS")]
    pub threads: Option<usize>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a coarse scene and its refined twin.
    Simulate(SimulateArgs),
    /// Sample coarse/fine patch pairs into a patch archive.
    Sample(SampleArgs),
    /// Learn a K-SVD dictionary from the residual patches of an archive.
    Ksvd(KsvdArgs),
    /// Train a network on a patch archive.
    Train(TrainArgs),
    /// Upsample a coarse sequence with a trained model.
    Synthesize(SynthesizeArgs),
    /// Evaluation reports as CSV.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Run a complete scenario and write a report directory.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML file with `frames`, `ratio`, `size`, `coarse_only` and an
    /// optional `[scene]` table.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Side of the built-in plume scene when no scene is configured.
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub ratio: Option<usize>,
    /// Inlet jitter seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Only run the coarse scene.
    #[arg(long)]
    pub coarse_only: bool,
    /// Output directory; receives `coarse/` and `fine/`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// TOML file with `[encoding]`, `[sampling]`, `augment` and `[[pairs]]`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Simulation directory holding `coarse/` and `fine/`; repeatable.
    #[arg(long = "pair")]
    pub pairs: Vec<PathBuf>,
    /// Comma-separated code values for the pair at the same position.
    #[arg(long = "codes")]
    pub codes: Vec<String>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Past frames in a phase-space encoding.
    #[arg(long)]
    pub history: Option<usize>,
    /// Add vorticity to a phase-space encoding.
    #[arg(long)]
    pub vorticity: bool,
    /// Name of a per-run scene code (space-time encoding); repeatable.
    #[arg(long = "extra-code")]
    pub extra_codes: Vec<String>,
    #[arg(long)]
    pub count: Option<usize>,
    /// Patch side in coarse cells.
    #[arg(long)]
    pub n: Option<usize>,
    /// Poisson-disk radius in coarse cells.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Weight of the strain term in the importance map.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Add rotated copies of every pair.
    #[arg(long)]
    pub augment: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    VelocityOnly,
    SpaceTime,
    PhaseSpace,
}

impl From<ModeArg> for EncodingKind {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::VelocityOnly => EncodingKind::VelocityOnly,
            ModeArg::SpaceTime => EncodingKind::SpaceTime,
            ModeArg::PhaseSpace => EncodingKind::PhaseSpace,
        }
    }
}

#[derive(Debug, Args)]
pub struct KsvdArgs {
    /// TOML file with `atoms`, `sparsity`, `sweeps` and `seed`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub patches: PathBuf,
    #[arg(long)]
    pub atoms: Option<usize>,
    /// Nonzeros per OMP code.
    #[arg(long)]
    pub sparsity: Option<usize>,
    #[arg(long)]
    pub sweeps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dictionary file (VF01, one atom per column).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML file with the training keys and `progressive`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub patches: PathBuf,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub atoms: Option<usize>,
    /// Extra network scales.
    #[arg(long)]
    pub scales: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long = "batch")]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Train all layers at once instead of inserting them one by one.
    #[arg(long)]
    pub full: bool,
    /// Loss history CSV.
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthesizeArgs {
    /// TOML file with `every`, `project`, `tracer`, `stride`, `codes` and a
    /// `[blend]` table.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: PathBuf,
    /// Coarse sequence directory.
    #[arg(long)]
    pub coarse: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Synthesize every k-th coarse frame.
    #[arg(long)]
    pub every: Option<usize>,
    /// Make every synthesized field divergence-free.
    #[arg(long)]
    pub project: bool,
    /// Skip the fine tracer density.
    #[arg(long)]
    pub no_tracer: bool,
    /// Patch cover stride in coarse cells.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Comma-separated scene code values of the coarse run.
    #[arg(long)]
    pub codes: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Shell-binned energy spectrum of one velocity file (`k,energy`).
    Spectrum(SpectrumArgs),
    /// Normalized error per frame against a reference sequence (`frame,nmse`).
    Error(ErrorArgs),
    /// Divergence norm per frame (`frame,divergence_norm`).
    Div(DivArgs),
    /// Per-frame stage timings and speedup.
    Timing(TimingArgs),
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    pub field: PathBuf,
    /// Skip the Hann window.
    #[arg(long)]
    pub raw: bool,
    /// Reference field; adds a `reference` column and reports the critical
    /// wavenumber.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long, default_value_t = 0.3)]
    pub tolerance: f64,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ErrorArgs {
    /// Sequence to evaluate; upsampled when coarser than the reference.
    #[arg(long)]
    pub synth: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DivArgs {
    pub dir: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TimingArgs {
    #[arg(long)]
    pub coarse: PathBuf,
    #[arg(long)]
    pub synth: PathBuf,
    #[arg(long)]
    pub fine: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Report directory; `report/<name>` by default.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the scenario's frame count.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Overrides the training epoch budget.
    #[arg(long)]
    pub epochs: Option<usize>,
}

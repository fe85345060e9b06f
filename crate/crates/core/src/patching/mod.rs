//! Coarse/fine patch pairs: extraction, encoding, rotation augmentation,
//! importance sampling and the patch archive.

pub(crate) mod archive;
mod encode;
mod morton;
mod rotate;
mod sample;

pub use archive::{decode_archive, encode_archive, read_archive, write_archive, PATCH_MAGIC};
pub use encode::{decode_block, encode_patch, extract_window, residual_target, CoarseFrame};
pub use morton::{morton_code, morton_index};
pub use rotate::{rotate_pair, rotate_vector, Rotation};
pub use sample::{
    augment, importance_map, sample_training_set, select_centers, PairSequence, SamplingConfig,
    Selection, TrainingManifest, TrainingSet, WeightMap,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::ops::curl_components;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingKind {
    VelocityOnly,
    SpaceTime,
    PhaseSpace,
}

impl std::fmt::Display for EncodingKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EncodingKind::VelocityOnly => "velocity_only",
            EncodingKind::SpaceTime => "space_time",
            EncodingKind::PhaseSpace => "phase_space",
        })
    }
}

impl std::str::FromStr for EncodingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "velocity_only" => Ok(EncodingKind::VelocityOnly),
            "space_time" => Ok(EncodingKind::SpaceTime),
            "phase_space" => Ok(EncodingKind::PhaseSpace),
            other => Err(Error::Config(format!("unknown encoding mode {other:?}"))),
        }
    }
}

/// How a coarse patch is turned into a network input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingMode {
    pub kind: EncodingKind,
    /// Number of past frames in addition to the current one (phase space).
    #[serde(default)]
    pub history: usize,
    #[serde(default)]
    pub include_vorticity: bool,
    /// Named per-sequence scene parameters appended after the space-time
    /// codes.
    #[serde(default)]
    pub extra_codes: Vec<String>,
}

impl EncodingMode {
    pub fn velocity_only() -> Self {
        EncodingMode {
            kind: EncodingKind::VelocityOnly,
            history: 0,
            include_vorticity: false,
            extra_codes: Vec::new(),
        }
    }

    pub fn space_time(extra_codes: Vec<String>) -> Self {
        EncodingMode {
            kind: EncodingKind::SpaceTime,
            history: 0,
            include_vorticity: false,
            extra_codes,
        }
    }

    /// Last `history + 1` velocity fields, optionally with their vorticity.
    pub fn phase_space(history: usize, include_vorticity: bool) -> Self {
        EncodingMode {
            kind: EncodingKind::PhaseSpace,
            history,
            include_vorticity,
            extra_codes: Vec::new(),
        }
    }

    /// Defaults per kind: phase space uses three frames with vorticity.
    pub fn from_kind(kind: EncodingKind) -> Self {
        match kind {
            EncodingKind::VelocityOnly => Self::velocity_only(),
            EncodingKind::SpaceTime => Self::space_time(Vec::new()),
            EncodingKind::PhaseSpace => Self::phase_space(2, true),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            EncodingKind::PhaseSpace => {}
            _ if self.history != 0 || self.include_vorticity => {
                return Err(Error::Config(format!(
                    "{} takes no history or vorticity",
                    self.kind
                )))
            }
            _ => {}
        }
        if self.kind != EncodingKind::SpaceTime && !self.extra_codes.is_empty() {
            return Err(Error::Config(
                "extra codes require space_time encoding".into(),
            ));
        }
        Ok(())
    }

    /// Number of frames an encoding looks at.
    pub fn frames_needed(&self) -> usize {
        self.history + 1
    }

    pub fn code_count(&self) -> usize {
        match self.kind {
            EncodingKind::SpaceTime => 2 + self.extra_codes.len(),
            _ => 0,
        }
    }

    /// Length of an encoded input for patches of side `n` in `d` dimensions.
    pub fn input_len(&self, d: usize, n: usize) -> usize {
        let cells = n.pow(d as u32);
        let frames = self.frames_needed();
        let mut len = frames * d * cells;
        if self.include_vorticity {
            len += frames * curl_components(d) * cells;
        }
        len + self.code_count()
    }

    pub fn allows_rotation(&self) -> bool {
        self.kind != EncodingKind::SpaceTime
    }
}

/// Patch size and refinement shared by coarse and fine patches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGeometry {
    pub dim: usize,
    /// Coarse patch side in cells.
    pub n: usize,
    /// Uniform integer refinement ratio.
    pub ratio: usize,
}

impl PatchGeometry {
    pub fn new(dim: usize, n: usize, ratio: usize) -> Result<Self> {
        if !(2..=3).contains(&dim) || n < 1 || ratio < 1 {
            return Err(Error::InvalidArgument(format!(
                "bad patch geometry: dim {dim}, n {n}, ratio {ratio}"
            )));
        }
        Ok(PatchGeometry { dim, n, ratio })
    }

    pub fn fine_side(&self) -> usize {
        self.n * self.ratio
    }

    pub fn coarse_cells(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn fine_cells(&self) -> usize {
        self.fine_side().pow(self.dim as u32)
    }

    pub fn residual_len(&self) -> usize {
        self.dim * self.fine_cells()
    }

    /// First coarse cell of the patch centered at `center`, if the patch
    /// lies inside `dims`.
    pub fn start(&self, center: &[usize], dims: &[usize]) -> Option<Vec<usize>> {
        let half = self.n / 2;
        center
            .iter()
            .zip(dims)
            .map(|(&c, &d)| {
                let s = c.checked_sub(half)?;
                (s + self.n <= d).then_some(s)
            })
            .collect()
    }

    /// Inclusive range of valid centers along an axis of `len` cells.
    pub fn center_range(&self, len: usize) -> Option<(usize, usize)> {
        let half = self.n / 2;
        (len >= self.n).then(|| (half, len - self.n + half))
    }
}

/// Maps velocities into the network's value range. Residuals share the
/// velocity scale so that `up + residual * scale` reproduces fine patches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationInfo {
    pub scale: f64,
    /// One per extra code, in the order of [`EncodingMode::extra_codes`].
    #[serde(default)]
    pub code_scales: Vec<f64>,
    /// Frame index divisor of the space-time time code.
    #[serde(default = "one")]
    pub time_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl NormalizationInfo {
    pub fn new(scale: f64) -> Result<Self> {
        let n = NormalizationInfo {
            scale,
            code_scales: Vec::new(),
            time_scale: 1.0,
        };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.scale)
            || !positive(self.time_scale)
            || !self.code_scales.iter().all(|&s| positive(s))
        {
            return Err(Error::InvalidArgument(format!(
                "normalization scales must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPatch {
    /// Normalized input vector.
    pub vector: Vec<f64>,
    /// Coarse center cell.
    pub center: Vec<usize>,
    pub frame: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchPair {
    pub input: EncodedPatch,
    /// Normalized `fine - up(coarse)` over the fine patch, component-major.
    pub residual: Vec<f64>,
    pub ratio: usize,
    /// Index of the source sequence pair.
    pub sequence: usize,
}

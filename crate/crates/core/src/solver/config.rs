use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::GridShape;

/// Smoke source. Positions and lengths are physical (cell centers sit at
/// `(i + 0.5) * spacing`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inlet {
    pub center: Vec<f64>,
    pub radius: f64,
    pub velocity: Vec<f64>,
    /// Density added per unit time inside the inlet.
    pub density_rate: f64,
    /// Amplitude of a seeded per-step perturbation of the inlet velocity
    /// along axis 0. Depends only on the seed and step, not on resolution.
    #[serde(default)]
    pub jitter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Obstacle {
    Sphere { center: Vec<f64>, radius: f64 },
    Box { min: Vec<f64>, max: Vec<f64> },
}

impl Obstacle {
    pub fn contains(&self, p: &[f64]) -> bool {
        match self {
            Obstacle::Sphere { center, radius } => {
                p.iter()
                    .zip(center)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    <= radius * radius
            }
            Obstacle::Box { min, max } => p
                .iter()
                .zip(min.iter().zip(max))
                .all(|(x, (lo, hi))| *x >= *lo && *x <= *hi),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Clamped advection lookups; the projection imposes no wall condition.
    #[default]
    Open,
    /// Advection wraps around. Test mode for translation checks.
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionConfig {
    /// Stop once `max |div u| <= tolerance * max |u|`.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig {
            tolerance: 1e-5,
            max_iterations: 20_000,
        }
    }
}

fn one() -> usize {
    1
}

/// Scene and numerical parameters of one simulation run.
///
/// Axis 1 points up; buoyancy accelerates along it in proportion to density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub grid: GridShape,
    pub dt: f64,
    pub buoyancy: f64,
    pub inlet: Inlet,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    /// Kinematic viscosity; kept fixed across resolutions.
    #[serde(default)]
    pub viscosity: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub steps_per_frame: usize,
    #[serde(default)]
    pub boundary: Boundary,
    #[serde(default)]
    pub projection: ProjectionConfig,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let d = self.grid.ndim();
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.inlet.radius > 0.0) {
            return bad(format!(
                "inlet radius must be positive, got {}",
                self.inlet.radius
            ));
        }
        if self.inlet.center.len() != d || self.inlet.velocity.len() != d {
            return bad(format!("inlet center and velocity need {d} entries"));
        }
        if self.steps_per_frame < 1 {
            return bad("steps_per_frame must be at least 1".into());
        }
        if self.viscosity < 0.0 {
            return bad("viscosity must be non-negative".into());
        }
        for o in &self.obstacles {
            let ok = match o {
                Obstacle::Sphere { center, radius } => center.len() == d && *radius > 0.0,
                Obstacle::Box { min, max } => min.len() == d && max.len() == d,
            };
            if !ok {
                return bad(format!("malformed obstacle {o:?}"));
            }
        }
        if !(self.projection.tolerance > 0.0) || self.projection.max_iterations == 0 {
            return bad("projection tolerance and max_iterations must be positive".into());
        }
        Ok(())
    }

    /// The same scene on a grid with `ratio` times the cells per axis.
    pub fn refined(&self, ratio: usize) -> Result<SimConfig> {
        let mut c = self.clone();
        c.grid = self.grid.refined(ratio)?;
        Ok(c)
    }

    /// Physical position of a cell center.
    pub fn cell_center(&self, coords: &[usize], out: &mut [f64]) {
        let h = self.grid.spacing();
        for (o, &c) in out.iter_mut().zip(coords) {
            *o = (c as f64 + 0.5) * h;
        }
    }

    pub fn from_toml(text: &str) -> Result<SimConfig> {
        let c: SimConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("sim config serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<SimConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SimConfig::from_toml(&text)
    }

    /// A rising 2D plume from a bottom-center inlet, used by tests and the
    /// shipped scenarios.
    pub fn plume_2d(n: usize) -> SimConfig {
        let l = n as f64;
        SimConfig {
            grid: GridShape::new(vec![n, n], 1.0).expect("n >= 4"),
            dt: 0.5,
            buoyancy: 0.5,
            inlet: Inlet {
                center: vec![0.5 * l, 0.15 * l],
                radius: 0.08 * l,
                velocity: vec![0.0, 1.0],
                density_rate: 1.0,
                jitter: 0.2,
            },
            obstacles: Vec::new(),
            viscosity: 0.0,
            seed: 7,
            steps_per_frame: 2,
            boundary: Boundary::Open,
            projection: ProjectionConfig::default(),
        }
    }
}

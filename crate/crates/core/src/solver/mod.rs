//! Reference incompressible smoke solver used to produce matched coarse and
//! fine training sequences.

mod config;
mod project;
mod sequence;

pub use config::{Boundary, Inlet, Obstacle, ProjectionConfig, SimConfig};
pub use project::{project, ProjectionStats};
pub use sequence::{
    check_pair, read_frame, read_timing, read_timing_rows, run_pair, run_sequence, PairOutput,
    SequenceManifest, COARSE_DIR, FINE_DIR, MANIFEST_FILE, TIMING_FILE,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::fields::{sample_linear, GridShape, ScalarField, VectorField};

/// Velocity and tracer density at one instant.
#[derive(Debug, Clone)]
pub struct SimState {
    pub velocity: VectorField,
    pub density: ScalarField,
    pub time_index: usize,
    pub config: SimConfig,
    pressure: Vec<f64>,
    fluid: Vec<bool>,
}

/// Cells whose center lies inside an obstacle are solid.
pub fn fluid_mask(cfg: &SimConfig) -> Vec<bool> {
    let shape = &cfg.grid;
    let d = shape.ndim();
    let mut p = [0.0; 3];
    (0..shape.len())
        .map(|i| {
            let c = shape.coords(i);
            cfg.cell_center(&c[..d], &mut p[..d]);
            !cfg.obstacles.iter().any(|o| o.contains(&p[..d]))
        })
        .collect()
}

/// Inlet velocity along axis 0 at a given step: the configured value plus
/// the seeded jitter. Identical for every resolution of the same scene.
pub fn inlet_velocity(inlet: &Inlet, seed: u64, step: usize) -> Vec<f64> {
    let mut v = inlet.velocity.clone();
    if inlet.jitter != 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(step as u64);
        v[0] += inlet.jitter * rng.random_range(-1.0..1.0);
    }
    v
}

/// Cells covered by the inlet.
pub fn inlet_cells(cfg: &SimConfig) -> Vec<usize> {
    let shape = &cfg.grid;
    let d = shape.ndim();
    let r2 = cfg.inlet.radius * cfg.inlet.radius;
    let mut p = [0.0; 3];
    (0..shape.len())
        .filter(|&i| {
            let c = shape.coords(i);
            cfg.cell_center(&c[..d], &mut p[..d]);
            p[..d]
                .iter()
                .zip(&cfg.inlet.center)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                <= r2
        })
        .collect()
}

/// Adds `rate * dt` of density inside the inlet. Shared with the tracer
/// advection of synthesized sequences.
pub fn add_inlet_density(density: &mut [f64], cells: &[usize], rate: f64, dt: f64) {
    for &i in cells {
        density[i] += rate * dt;
    }
}

/// Semi-Lagrangian advection of scalar `values` through `velocity` with a
/// midpoint (RK2) backtrace. Interpolation weights are convex, so the result
/// stays inside the range of the input.
pub fn advect_scalar(values: &[f64], velocity: &VectorField, dt: f64, periodic: bool) -> Vec<f64> {
    let pts = departure_points(velocity, dt, periodic);
    sample_all(values, velocity.shape().dims(), &pts, periodic)
}

fn departure_points(velocity: &VectorField, dt: f64, periodic: bool) -> Vec<[f64; 3]> {
    let shape = velocity.shape();
    let d = shape.ndim();
    let dims = shape.dims();
    let h = shape.spacing();
    let mut pts = Vec::with_capacity(shape.len());
    let mut mid = [0.0; 3];
    for i in 0..shape.len() {
        let c = shape.coords(i);
        for a in 0..d {
            mid[a] = c[a] as f64 - 0.5 * dt * velocity.component(a)[i] / h;
        }
        let mut dep = [0.0; 3];
        for a in 0..d {
            let u = sample_linear(velocity.component(a), dims, &mid[..d], periodic);
            dep[a] = c[a] as f64 - dt * u / h;
        }
        pts.push(dep);
    }
    pts
}

fn sample_all(values: &[f64], dims: &[usize], pts: &[[f64; 3]], periodic: bool) -> Vec<f64> {
    let d = dims.len();
    pts.iter()
        .map(|p| sample_linear(values, dims, &p[..d], periodic))
        .collect()
}

/// Implicit diffusion `(I - nu dt L) u = u*` by Jacobi sweeps with
/// zero-gradient boundaries.
fn diffuse(values: &mut [f64], dims: &[usize], coef: f64, sweeps: usize) {
    let d = dims.len();
    let n = values.len();
    let rhs = values.to_vec();
    let mut next = vec![0.0; n];
    let strides: Vec<usize> = (0..d).map(|a| crate::fields::stride(dims, a)).collect();
    for _ in 0..sweeps {
        for i in 0..n {
            let mut nb = 0.0;
            for a in 0..d {
                let s = strides[a];
                let k = (i / s) % dims[a];
                nb += if k > 0 { values[i - s] } else { values[i] };
                nb += if k + 1 < dims[a] {
                    values[i + s]
                } else {
                    values[i]
                };
            }
            next[i] = (rhs[i] + coef * nb) / (1.0 + 2.0 * d as f64 * coef);
        }
        values.copy_from_slice(&next);
    }
}

const DIFFUSION_SWEEPS: usize = 30;

impl SimState {
    /// Fluid at rest with no smoke.
    pub fn new(config: SimConfig) -> Result<SimState> {
        config.validate()?;
        let shape: GridShape = config.grid.clone();
        let fluid = fluid_mask(&config);
        Ok(SimState {
            velocity: VectorField::zeros(shape.clone()),
            density: ScalarField::zeros(shape.clone()),
            time_index: 0,
            pressure: vec![0.0; shape.len()],
            fluid,
            config,
        })
    }

    pub fn with_fields(
        config: SimConfig,
        velocity: VectorField,
        density: ScalarField,
    ) -> Result<SimState> {
        let mut s = SimState::new(config)?;
        if velocity.shape() != &s.config.grid || density.shape() != &s.config.grid {
            return Err(crate::error::Error::DimensionMismatch(
                "state fields do not match the configured grid".into(),
            ));
        }
        s.velocity = velocity;
        s.density = density;
        Ok(s)
    }

    pub fn fluid(&self) -> &[bool] {
        &self.fluid
    }

    /// Advances one time step.
    pub fn step(&mut self) -> Result<ProjectionStats> {
        let cfg = &self.config;
        let d = cfg.grid.ndim();
        let dims = cfg.grid.dims().to_vec();
        let dt = cfg.dt;
        let periodic = cfg.boundary == Boundary::Periodic;

        let cells = inlet_cells(cfg);
        let v_in = inlet_velocity(&cfg.inlet, cfg.seed, self.time_index);
        for &i in &cells {
            for a in 0..d {
                self.velocity.component_mut(a)[i] = v_in[a];
            }
        }
        add_inlet_density(
            self.density.values_mut(),
            &cells,
            cfg.inlet.density_rate,
            dt,
        );

        if cfg.buoyancy != 0.0 && d > 1 {
            let b = dt * cfg.buoyancy;
            let rho = self.density.values();
            let up = self.velocity.component_mut(1);
            for (u, r) in up.iter_mut().zip(rho) {
                *u += b * r;
            }
        }

        let pts = departure_points(&self.velocity, dt, periodic);
        let comps: Vec<Vec<f64>> = (0..d)
            .map(|a| sample_all(self.velocity.component(a), &dims, &pts, periodic))
            .collect();
        let den = sample_all(self.density.values(), &dims, &pts, periodic);
        for (a, c) in comps.into_iter().enumerate() {
            self.velocity.component_mut(a).copy_from_slice(&c);
        }
        self.density.values_mut().copy_from_slice(&den);

        if cfg.viscosity > 0.0 {
            let h = cfg.grid.spacing();
            let coef = cfg.viscosity * dt / (h * h);
            for a in 0..d {
                diffuse(
                    self.velocity.component_mut(a),
                    &dims,
                    coef,
                    DIFFUSION_SWEEPS,
                );
            }
        }

        for (i, &f) in self.fluid.iter().enumerate() {
            if !f {
                for a in 0..d {
                    self.velocity.component_mut(a)[i] = 0.0;
                }
                self.density.values_mut()[i] = 0.0;
            }
        }

        let stats = project(
            &mut self.velocity,
            &self.fluid,
            &mut self.pressure,
            &cfg.projection,
        )?;
        self.time_index += 1;
        Ok(stats)
    }

    /// Runs `steps_per_frame` steps.
    pub fn advance_frame(&mut self) -> Result<()> {
        for _ in 0..self.config.steps_per_frame {
            self.step()?;
        }
        Ok(())
    }
}

//! Pressure projection on the collocated grid.
//!
//! The correction is the least-norm change that makes the discrete
//! divergence (the same operator as [`crate::fields::divergence`]) vanish
//! while keeping velocity zero in solid cells:
//! `u <- u - M D^T q` with `(D M D^T) q = D u`. The CG residual is exactly
//! the divergence of the corrected field, so the stopping test bounds the
//! post-projection divergence directly.

use crate::error::{Error, Result};
use crate::fields::ops::{axis_derivative, axis_derivative_adjoint_add, stencil};
use crate::fields::{stride, VectorField};

use super::config::ProjectionConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionStats {
    pub iterations: usize,
    /// Max-norm of the divergence after projection.
    pub residual: f64,
}

struct Operator<'a> {
    dims: &'a [usize],
    spacing: f64,
    fluid: &'a [bool],
    scratch: Vec<f64>,
    grad: Vec<f64>,
}

impl Operator<'_> {
    /// out = D M D^T q
    fn apply(&mut self, q: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for axis in 0..self.dims.len() {
            self.grad.iter_mut().for_each(|v| *v = 0.0);
            axis_derivative_adjoint_add(q, self.dims, axis, self.spacing, &mut self.grad);
            for (g, &f) in self.grad.iter_mut().zip(self.fluid) {
                if !f {
                    *g = 0.0;
                }
            }
            axis_derivative(&self.grad, self.dims, axis, self.spacing, &mut self.scratch);
            out.iter_mut().zip(&self.scratch).for_each(|(o, s)| *o += s);
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let n = self.fluid.len();
        let mut diag = vec![0.0; n];
        let inv_h2 = 1.0 / (self.spacing * self.spacing);
        for axis in 0..self.dims.len() {
            let len = self.dims[axis];
            let s = stride(self.dims, axis);
            for (idx, d) in diag.iter_mut().enumerate() {
                let i = (idx / s) % len;
                let base = idx - i * s;
                for (j, c) in stencil(i, len) {
                    if self.fluid[base + j * s] {
                        *d += c * c * inv_h2;
                    }
                }
            }
        }
        diag
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Projects `velocity` in place. `fluid[i]` is false for solid cells, whose
/// velocity must already be zero. `pressure` is the warm start and receives
/// the solution.
pub fn project(
    velocity: &mut VectorField,
    fluid: &[bool],
    pressure: &mut Vec<f64>,
    cfg: &ProjectionConfig,
) -> Result<ProjectionStats> {
    let shape = velocity.shape().clone();
    let dims = shape.dims();
    let n = shape.len();
    if pressure.len() != n {
        *pressure = vec![0.0; n];
    }
    let max_speed = velocity.max_speed();
    let target = cfg.tolerance * max_speed;

    let mut op = Operator {
        dims,
        spacing: shape.spacing(),
        fluid,
        scratch: vec![0.0; n],
        grad: vec![0.0; n],
    };

    // r = D u - A q0
    let mut r = vec![0.0; n];
    {
        let comps: Vec<&[f64]> = velocity.components().iter().map(|c| c.as_slice()).collect();
        crate::fields::ops::divergence_raw(&comps, dims, shape.spacing(), &mut r);
    }
    if max_abs(&r) <= target {
        // already solenoidal: leave the field untouched
        return Ok(ProjectionStats {
            iterations: 0,
            residual: max_abs(&r),
        });
    }
    let mut ap = vec![0.0; n];
    op.apply(pressure, &mut ap);
    r.iter_mut().zip(&ap).for_each(|(r, a)| *r -= a);

    let inv_diag: Vec<f64> = op
        .diagonal()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 0.0 })
        .collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, m)| r * m).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut iterations = 0;
    let mut residual = max_abs(&r);
    while residual > target {
        if iterations >= cfg.max_iterations {
            return Err(Error::PoissonNotConverged {
                iterations,
                residual,
            });
        }
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::PoissonNotConverged {
                iterations,
                residual,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            pressure[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        residual = max_abs(&r);
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        iterations += 1;
    }

    let spacing = shape.spacing();
    for axis in 0..dims.len() {
        let mut g = vec![0.0; n];
        axis_derivative_adjoint_add(pressure, dims, axis, spacing, &mut g);
        let comp = velocity.component_mut(axis);
        for i in 0..n {
            if fluid[i] {
                comp[i] -= g[i];
            }
        }
    }
    Ok(ProjectionStats {
        iterations,
        residual,
    })
}

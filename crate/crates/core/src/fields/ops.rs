//! Finite-difference operators on collocated grids.
//!
//! Interior cells use second-order central differences; the first and last
//! cell along an axis use first-order one-sided differences.

use super::grid::{stride, GridShape, ScalarField, VectorField};

/// Two-point derivative stencil at position `i` of a line of `n >= 2` cells,
/// unit spacing: `(plus_index, plus_coef), (minus_index, minus_coef)`.
#[inline]
pub fn stencil(i: usize, n: usize) -> [(usize, f64); 2] {
    if i == 0 {
        [(1, 1.0), (0, -1.0)]
    } else if i == n - 1 {
        [(n - 1, 1.0), (n - 2, -1.0)]
    } else {
        [(i + 1, 0.5), (i - 1, -0.5)]
    }
}

/// `out[i] = d values / d x_axis` at every cell.
pub fn axis_derivative(values: &[f64], dims: &[usize], axis: usize, spacing: f64, out: &mut [f64]) {
    let n = dims[axis];
    let s = stride(dims, axis);
    let inv_h = 1.0 / spacing;
    for (idx, o) in out.iter_mut().enumerate() {
        let i = (idx / s) % n;
        let base = idx - i * s;
        let [(p, cp), (m, cm)] = stencil(i, n);
        *o = (cp * values[base + p * s] + cm * values[base + m * s]) * inv_h;
    }
}

/// Accumulates the transpose of [`axis_derivative`]: `out += D_axis^T input`.
pub fn axis_derivative_adjoint_add(
    input: &[f64],
    dims: &[usize],
    axis: usize,
    spacing: f64,
    out: &mut [f64],
) {
    let n = dims[axis];
    let s = stride(dims, axis);
    let inv_h = 1.0 / spacing;
    for (idx, &g) in input.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let i = (idx / s) % n;
        let base = idx - i * s;
        let [(p, cp), (m, cm)] = stencil(i, n);
        out[base + p * s] += cp * g * inv_h;
        out[base + m * s] += cm * g * inv_h;
    }
}

/// Divergence of a raw component list on `dims`.
pub fn divergence_raw(components: &[&[f64]], dims: &[usize], spacing: f64, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let mut tmp = vec![0.0; out.len()];
    for (axis, comp) in components.iter().enumerate() {
        axis_derivative(comp, dims, axis, spacing, &mut tmp);
        out.iter_mut().zip(&tmp).for_each(|(o, t)| *o += t);
    }
}

pub fn divergence(f: &VectorField) -> ScalarField {
    let shape = f.shape();
    let comps: Vec<&[f64]> = f.components().iter().map(|c| c.as_slice()).collect();
    let mut out = vec![0.0; shape.len()];
    divergence_raw(&comps, shape.dims(), shape.spacing(), &mut out);
    ScalarField::new(shape.clone(), out).expect("divergence of a finite field is finite")
}

/// Curl: a scalar `dv/dx - du/dy` in 2D, a vector in 3D.
#[derive(Debug, Clone, PartialEq)]
pub enum Curl {
    Scalar(ScalarField),
    Vector(VectorField),
}

impl Curl {
    /// Component grids (one in 2D, three in 3D).
    pub fn into_components(self) -> Vec<Vec<f64>> {
        match self {
            Curl::Scalar(s) => vec![s.into_values()],
            Curl::Vector(v) => v.into_components(),
        }
    }
}

/// Number of vorticity components for a `d`-dimensional flow.
pub fn curl_components(d: usize) -> usize {
    if d == 2 {
        1
    } else {
        3
    }
}

pub fn curl_raw(components: &[&[f64]], dims: &[usize], spacing: f64) -> Vec<Vec<f64>> {
    let n: usize = dims.iter().product();
    let deriv = |c: usize, axis: usize| {
        let mut out = vec![0.0; n];
        axis_derivative(components[c], dims, axis, spacing, &mut out);
        out
    };
    let sub =
        |a: Vec<f64>, b: Vec<f64>| -> Vec<f64> { a.iter().zip(&b).map(|(x, y)| x - y).collect() };
    if dims.len() == 2 {
        vec![sub(deriv(1, 0), deriv(0, 1))]
    } else {
        vec![
            sub(deriv(2, 1), deriv(1, 2)),
            sub(deriv(0, 2), deriv(2, 0)),
            sub(deriv(1, 0), deriv(0, 1)),
        ]
    }
}

pub fn curl(f: &VectorField) -> Curl {
    let shape = f.shape();
    let comps: Vec<&[f64]> = f.components().iter().map(|c| c.as_slice()).collect();
    let mut parts = curl_raw(&comps, shape.dims(), shape.spacing());
    if shape.ndim() == 2 {
        Curl::Scalar(ScalarField::new(shape.clone(), parts.remove(0)).expect("finite"))
    } else {
        Curl::Vector(VectorField::new(shape.clone(), parts).expect("finite"))
    }
}

/// Component-wise gradient: entry `c` is the gradient of component `c`.
pub fn gradient_all(f: &VectorField) -> Vec<VectorField> {
    let shape = f.shape();
    f.components()
        .iter()
        .map(|comp| {
            let parts = (0..shape.ndim())
                .map(|axis| {
                    let mut out = vec![0.0; shape.len()];
                    axis_derivative(comp, shape.dims(), axis, shape.spacing(), &mut out);
                    out
                })
                .collect();
            VectorField::new(shape.clone(), parts).expect("finite")
        })
        .collect()
}

/// Frobenius norm of the strain-rate tensor `(grad u + grad u^T) / 2` per cell.
pub fn strain_rate_norm(f: &VectorField) -> ScalarField {
    let shape = f.shape().clone();
    let d = shape.ndim();
    let grads = gradient_all(f);
    let values = (0..shape.len())
        .map(|i| {
            let mut s = 0.0;
            for a in 0..d {
                for b in 0..d {
                    let e = 0.5 * (grads[a].component(b)[i] + grads[b].component(a)[i]);
                    s += e * e;
                }
            }
            s.sqrt()
        })
        .collect();
    ScalarField::new(shape, values).expect("finite")
}

/// Whether `coords` is at least one cell away from every boundary.
pub fn is_interior(shape: &GridShape, coords: &[usize]) -> bool {
    coords
        .iter()
        .zip(shape.dims())
        .all(|(&c, &n)| c > 0 && c + 1 < n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn shape2(n: usize) -> GridShape {
        GridShape::unit(&[n, n]).unwrap()
    }

    fn random_field(shape: GridShape, seed: u64) -> VectorField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        VectorField::from_fn(shape, |_, out| {
            for v in out.iter_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
        })
    }

    #[test]
    fn constant_field_has_zero_derivatives() {
        let f = VectorField::constant(GridShape::unit(&[5, 6, 4]).unwrap(), &[1.5, -2.0, 0.25]);
        assert!(divergence(&f).values().iter().all(|&v| v == 0.0));
        match curl(&f) {
            Curl::Vector(c) => assert_eq!(c.norm_sq(), 0.0),
            Curl::Scalar(_) => panic!("3D curl must be a vector"),
        }
        for g in gradient_all(&f) {
            assert_eq!(g.norm_sq(), 0.0);
        }
    }

    #[test]
    fn linear_fields_2d() {
        let shape = shape2(8);
        let saddle = VectorField::from_fn(shape.clone(), |p, o| {
            o[0] = p[0] as f64;
            o[1] = -(p[1] as f64);
        });
        let source = VectorField::from_fn(shape.clone(), |p, o| {
            o[0] = p[0] as f64;
            o[1] = p[1] as f64;
        });
        let rot = VectorField::from_fn(shape.clone(), |p, o| {
            o[0] = -(p[1] as f64);
            o[1] = p[0] as f64;
        });
        let div_saddle = divergence(&saddle);
        let div_source = divergence(&source);
        let Curl::Scalar(w) = curl(&rot) else {
            panic!()
        };
        for i in 0..shape.len() {
            // one-sided differences are exact on linear data too
            assert!(div_saddle.values()[i].abs() < 1e-12);
            assert!((div_source.values()[i] - 2.0).abs() < 1e-12);
            assert!((w.values()[i] - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ramp_gradient() {
        let shape = GridShape::new(vec![6, 5], 0.5).unwrap();
        let f = VectorField::from_fn(shape.clone(), |p, o| {
            o[0] = p[0] as f64 * 0.5;
            o[1] = 0.0;
        });
        let g = gradient_all(&f);
        assert!(g[0].component(0).iter().all(|&v| (v - 1.0).abs() < 1e-12));
        assert!(g[0].component(1).iter().all(|&v| v.abs() < 1e-12));
    }

    // Independent stencil loops over explicit coordinates.
    fn oracle_derivative(f: &[f64], dims: &[usize], axis: usize, h: f64, coords: &[usize]) -> f64 {
        let at = |c: &[usize]| f[c.iter().zip(dims).fold(0, |acc, (&x, &d)| acc * d + x)];
        let n = dims[axis];
        let mut hi = coords.to_vec();
        let mut lo = coords.to_vec();
        let i = coords[axis];
        if i == 0 {
            hi[axis] = 1;
            (at(&hi) - at(&lo)) / h
        } else if i == n - 1 {
            lo[axis] = n - 2;
            (at(&hi) - at(&lo)) / h
        } else {
            hi[axis] = i + 1;
            lo[axis] = i - 1;
            (at(&hi) - at(&lo)) / (2.0 * h)
        }
    }

    #[test]
    fn gradient_matches_stencil_oracle_3d() {
        let shape = GridShape::new(vec![4, 4, 4], 0.7).unwrap();
        let f = random_field(shape.clone(), 3);
        let g = gradient_all(&f);
        for i in 0..shape.len() {
            let p = shape.coords(i);
            for c in 0..3 {
                for a in 0..3 {
                    let want = oracle_derivative(f.component(c), shape.dims(), a, 0.7, &p);
                    assert!((g[c].component(a)[i] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn curl_3d_single_perturbed_cell() {
        let shape = GridShape::unit(&[5, 5, 5]).unwrap();
        let mut f = VectorField::zeros(shape.clone());
        let at = shape.index(&[2, 3, 1]);
        f.component_mut(0)[at] = 1.0;
        f.component_mut(1)[at] = -2.0;
        f.component_mut(2)[at] = 0.5;
        let Curl::Vector(w) = curl(&f) else { panic!() };
        for i in 0..shape.len() {
            let p = shape.coords(i);
            let d =
                |c: usize, a: usize| oracle_derivative(f.component(c), shape.dims(), a, 1.0, &p);
            let want = [d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)];
            for c in 0..3 {
                assert!((w.component(c)[i] - want[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn adjoint_is_transpose() {
        let dims = [5usize, 4, 6];
        let n: usize = dims.iter().product();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        for axis in 0..3 {
            let mut dx = vec![0.0; n];
            axis_derivative(&x, &dims, axis, 0.3, &mut dx);
            let mut dty = vec![0.0; n];
            axis_derivative_adjoint_add(&y, &dims, axis, 0.3, &mut dty);
            let lhs: f64 = dx.iter().zip(&y).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.iter().zip(&dty).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn operators_are_linear() {
        let shape = GridShape::unit(&[6, 5, 4]).unwrap();
        let f = random_field(shape.clone(), 1);
        let g = random_field(shape.clone(), 2);
        let (a, b) = (1.7, -0.3);
        let h = f.lin_comb(a, &g, b).unwrap();
        let (df, dg, dh) = (divergence(&f), divergence(&g), divergence(&h));
        let (Curl::Vector(cf), Curl::Vector(cg), Curl::Vector(ch)) = (curl(&f), curl(&g), curl(&h))
        else {
            panic!()
        };
        let scale = 1.0 + dh.max_abs();
        for i in 0..shape.len() {
            let want = a * df.values()[i] + b * dg.values()[i];
            assert!((dh.values()[i] - want).abs() <= 1e-5 * scale);
            for c in 0..3 {
                let want = a * cf.component(c)[i] + b * cg.component(c)[i];
                assert!((ch.component(c)[i] - want).abs() <= 1e-5 * scale);
            }
        }
    }

    #[test]
    fn strain_of_rigid_rotation_is_zero() {
        let shape = shape2(6);
        let rot = VectorField::from_fn(shape, |p, o| {
            o[0] = -(p[1] as f64);
            o[1] = p[0] as f64;
        });
        assert!(strain_rate_norm(&rot).max_abs() < 1e-12);
    }
}

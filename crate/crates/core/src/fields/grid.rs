use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform cell-centered grid in two or three dimensions.
///
/// Storage is row-major with the last axis fastest. Axis `a` of the grid
/// carries velocity component `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridShapeRepr", into = "GridShapeRepr")]
pub struct GridShape {
    dims: Vec<usize>,
    spacing: f64,
}

#[derive(Serialize, Deserialize)]
struct GridShapeRepr {
    dims: Vec<usize>,
    #[serde(default = "default_spacing")]
    spacing: f64,
}

fn default_spacing() -> f64 {
    1.0
}

impl TryFrom<GridShapeRepr> for GridShape {
    type Error = Error;

    fn try_from(r: GridShapeRepr) -> Result<Self> {
        GridShape::new(r.dims, r.spacing)
    }
}

impl From<GridShape> for GridShapeRepr {
    fn from(g: GridShape) -> Self {
        GridShapeRepr {
            dims: g.dims,
            spacing: g.spacing,
        }
    }
}

pub const MIN_CELLS: usize = 4;

impl GridShape {
    pub fn new(dims: Vec<usize>, spacing: f64) -> Result<Self> {
        if !(2..=3).contains(&dims.len()) {
            return Err(Error::InvalidShape(format!(
                "expected 2 or 3 dimensions, got {}",
                dims.len()
            )));
        }
        if let Some(d) = dims.iter().find(|&&d| d < MIN_CELLS) {
            return Err(Error::InvalidShape(format!(
                "every axis needs at least {MIN_CELLS} cells, got {d}"
            )));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::InvalidShape(format!(
                "spacing must be positive, got {spacing}"
            )));
        }
        Ok(GridShape { dims, spacing })
    }

    pub fn unit(dims: &[usize]) -> Result<Self> {
        GridShape::new(dims.to_vec(), 1.0)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same physical extent with `ratio` times as many cells per axis.
    pub fn refined(&self, ratio: usize) -> Result<Self> {
        if ratio == 0 {
            return Err(Error::InvalidArgument("ratio must be at least 1".into()));
        }
        GridShape::new(
            self.dims.iter().map(|d| d * ratio).collect(),
            self.spacing / ratio as f64,
        )
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        flat_index(&self.dims, coords)
    }

    pub fn coords(&self, index: usize) -> [usize; 3] {
        unravel(&self.dims, index)
    }

    pub fn contains(&self, coords: &[usize]) -> bool {
        coords.len() == self.ndim() && coords.iter().zip(&self.dims).all(|(c, d)| c < d)
    }
}

pub(crate) fn flat_index(dims: &[usize], coords: &[usize]) -> usize {
    coords.iter().zip(dims).fold(0, |acc, (&c, &d)| acc * d + c)
}

pub(crate) fn unravel(dims: &[usize], mut index: usize) -> [usize; 3] {
    let mut out = [0usize; 3];
    for a in (0..dims.len()).rev() {
        out[a] = index % dims[a];
        index /= dims[a];
    }
    out
}

pub(crate) fn stride(dims: &[usize], axis: usize) -> usize {
    dims[axis + 1..].iter().product()
}

fn check_values(shape: &GridShape, values: &[f64]) -> Result<()> {
    if values.len() != shape.len() {
        return Err(Error::DimensionMismatch(format!(
            "grid {:?} needs {} values, got {}",
            shape.dims(),
            shape.len(),
            values.len()
        )));
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(())
}

/// One cell-centered scalar grid (density, vorticity magnitude, divergence).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    shape: GridShape,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(shape: GridShape, values: Vec<f64>) -> Result<Self> {
        check_values(&shape, &values)?;
        Ok(ScalarField { shape, values })
    }

    pub fn zeros(shape: GridShape) -> Self {
        let values = vec![0.0; shape.len()];
        ScalarField { shape, values }
    }

    pub fn from_fn(shape: GridShape, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let d = shape.ndim();
        let values = (0..shape.len()).map(|i| f(&shape.coords(i)[..d])).collect();
        ScalarField { shape, values }
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, coords: &[usize]) -> f64 {
        self.values[self.shape.index(coords)]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Cell-centered velocity: one scalar grid per spatial axis.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    shape: GridShape,
    components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn new(shape: GridShape, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.len() != shape.ndim() {
            return Err(Error::DimensionMismatch(format!(
                "{}-D grid needs {} components, got {}",
                shape.ndim(),
                shape.ndim(),
                components.len()
            )));
        }
        for c in &components {
            check_values(&shape, c)?;
        }
        Ok(VectorField { shape, components })
    }

    pub fn zeros(shape: GridShape) -> Self {
        let components = vec![vec![0.0; shape.len()]; shape.ndim()];
        VectorField { shape, components }
    }

    pub fn constant(shape: GridShape, value: &[f64]) -> Self {
        let components = value[..shape.ndim()]
            .iter()
            .map(|&v| vec![v; shape.len()])
            .collect();
        VectorField { shape, components }
    }

    /// Builds a field from `f(coords, out)` which writes one value per component.
    pub fn from_fn(shape: GridShape, mut f: impl FnMut(&[usize], &mut [f64])) -> Self {
        let d = shape.ndim();
        let mut components = vec![vec![0.0; shape.len()]; d];
        let mut buf = [0.0; 3];
        for i in 0..shape.len() {
            f(&shape.coords(i)[..d], &mut buf[..d]);
            for c in 0..d {
                components[c][i] = buf[c];
            }
        }
        VectorField { shape, components }
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.ndim()
    }

    pub fn component(&self, c: usize) -> &[f64] {
        &self.components[c]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.components[c]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn components_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.components
    }

    pub fn into_components(self) -> Vec<Vec<f64>> {
        self.components
    }

    pub fn get(&self, coords: &[usize]) -> Vec<f64> {
        let i = self.shape.index(coords);
        self.components.iter().map(|c| c[i]).collect()
    }

    pub fn speed_at(&self, index: usize) -> f64 {
        self.components
            .iter()
            .map(|c| c[index] * c[index])
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_speed(&self) -> f64 {
        (0..self.shape.len()).fold(0.0, |m, i| m.max(self.speed_at(i)))
    }

    pub fn mean_speed(&self) -> f64 {
        let n = self.shape.len();
        (0..n).map(|i| self.speed_at(i)).sum::<f64>() / n as f64
    }

    /// Squared L2 norm over all cells and components.
    pub fn norm_sq(&self) -> f64 {
        self.components
            .iter()
            .flat_map(|c| c.iter())
            .map(|v| v * v)
            .sum()
    }

    /// `a * self + b * other`; shapes must match.
    pub fn lin_comb(&self, a: f64, other: &VectorField, b: f64) -> Result<VectorField> {
        if self.shape != other.shape {
            return Err(Error::DimensionMismatch(format!(
                "{:?} vs {:?}",
                self.shape.dims(),
                other.shape.dims()
            )));
        }
        let components = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| a * p + b * q).collect())
            .collect();
        Ok(VectorField {
            shape: self.shape.clone(),
            components,
        })
    }

    /// Values rounded through `f32`, i.e. what a VF01 round trip yields.
    pub fn to_f32_precision(&self) -> VectorField {
        let components = self
            .components
            .iter()
            .map(|c| c.iter().map(|&v| v as f32 as f64).collect())
            .collect();
        VectorField {
            shape: self.shape.clone(),
            components,
        }
    }
}

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weights of the loss terms: local error, gradient error, divergence error
/// and parameter regularization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub local: f64,
    pub gradient: f64,
    pub divergence: f64,
    pub regularization: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            local: 1.0,
            gradient: 0.05,
            divergence: 0.05,
            regularization: 0.5,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.local,
            self.gradient,
            self.divergence,
            self.regularization,
        ];
        if all.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "loss weights must be non-negative: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 4] {
        [
            self.local,
            self.gradient,
            self.divergence,
            self.regularization,
        ]
    }
}

/// One unrolled shrinkage network: `w_t = shrink(S_t w_{t-1} + B y, lambda_t)`
/// from `w_0 = 0`, residual `D_h w_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    /// `atoms x n_in`
    pub b: Array2<f64>,
    /// `T` matrices of `atoms x atoms`.
    pub s: Vec<Array2<f64>>,
    pub lambda: Vec<f64>,
    /// `n_res x atoms`
    pub dh: Array2<f64>,
}

impl NetworkParams {
    pub fn zeros(layers: usize, atoms: usize, n_in: usize, n_res: usize) -> Self {
        NetworkParams {
            b: Array2::zeros((atoms, n_in)),
            s: (0..layers).map(|_| Array2::zeros((atoms, atoms))).collect(),
            lambda: vec![0.0; layers],
            dh: Array2::zeros((n_res, atoms)),
        }
    }

    /// Every entry uniform in `[-scale, scale]`; thresholds clamped at 0.
    pub fn random(
        layers: usize,
        atoms: usize,
        n_in: usize,
        n_res: usize,
        scale: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut p = NetworkParams::zeros(layers, atoms, n_in, n_res);
        for s in p.slices_mut() {
            s.iter_mut()
                .for_each(|v| *v = rng.random_range(-scale..=scale));
        }
        p.clamp_thresholds();
        p
    }

    pub fn seeded(
        layers: usize,
        atoms: usize,
        n_in: usize,
        n_res: usize,
        scale: f64,
        seed: u64,
    ) -> Self {
        NetworkParams::random(
            layers,
            atoms,
            n_in,
            n_res,
            scale,
            &mut ChaCha8Rng::seed_from_u64(seed),
        )
    }

    pub fn layers(&self) -> usize {
        self.s.len()
    }

    pub fn atoms(&self) -> usize {
        self.b.nrows()
    }

    pub fn n_in(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_res(&self) -> usize {
        self.dh.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.atoms();
        let ok = self.s.iter().all(|s| s.dim() == (a, a))
            && self.lambda.len() == self.s.len()
            && self.dh.ncols() == a
            && !self.s.is_empty();
        if !ok {
            return Err(Error::DimensionMismatch(
                "inconsistent network parameter shapes".into(),
            ));
        }
        if self.lambda.iter().any(|&l| l < 0.0) {
            return Err(Error::InvalidArgument(
                "thresholds must be non-negative".into(),
            ));
        }
        let mut k = 0;
        for s in self.slices() {
            if let Some(i) = s.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { index: k + i });
            }
            k += s.len();
        }
        Ok(())
    }

    /// Parameter blocks in storage order: `B, S_1..S_T, lambda, D_h`.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.s.len() + 3);
        out.push(self.b.as_slice().expect("standard layout"));
        for s in &self.s {
            out.push(s.as_slice().expect("standard layout"));
        }
        out.push(&self.lambda);
        out.push(self.dh.as_slice().expect("standard layout"));
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(self.s.len() + 3);
        out.push(self.b.as_slice_mut().expect("standard layout"));
        for s in &mut self.s {
            out.push(s.as_slice_mut().expect("standard layout"));
        }
        out.push(&mut self.lambda);
        out.push(self.dh.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn norm_sq(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .map(|v| v * v)
            .sum()
    }

    pub fn clamp_thresholds(&mut self) {
        self.lambda.iter_mut().for_each(|l| *l = l.max(0.0));
    }

    /// Appends a layer with entries uniform in `[-scale, scale]`.
    pub fn push_layer(&mut self, scale: f64, rng: &mut ChaCha8Rng) {
        let a = self.atoms();
        self.s.push(Array2::from_shape_fn((a, a), |_| {
            rng.random_range(-scale..=scale)
        }));
        self.lambda.push(rng.random_range(-scale..=scale).max(0.0));
    }

    /// Rounds every parameter to the nearest `f32`.
    pub fn to_f32_precision(&self) -> Self {
        let mut p = self.clone();
        for s in p.slices_mut() {
            s.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
        p
    }
}

/// Sum of `M + 1` identically shaped networks; `M = 0` is a single network.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiscaleNet {
    pub scales: Vec<NetworkParams>,
}

impl MultiscaleNet {
    pub fn single(p: NetworkParams) -> Self {
        MultiscaleNet { scales: vec![p] }
    }

    pub fn new(scales: Vec<NetworkParams>) -> Result<Self> {
        let first = scales
            .first()
            .ok_or_else(|| Error::InvalidArgument("a network needs at least one scale".into()))?;
        let dims = |p: &NetworkParams| (p.layers(), p.atoms(), p.n_in(), p.n_res());
        if scales.iter().any(|p| dims(p) != dims(first)) {
            return Err(Error::DimensionMismatch("scales differ in shape".into()));
        }
        for p in &scales {
            p.validate()?;
        }
        Ok(MultiscaleNet { scales })
    }

    /// `extra_scales + 1` networks seeded from one stream.
    pub fn seeded(
        extra_scales: usize,
        layers: usize,
        atoms: usize,
        n_in: usize,
        n_res: usize,
        scale: f64,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MultiscaleNet {
            scales: (0..=extra_scales)
                .map(|_| NetworkParams::random(layers, atoms, n_in, n_res, scale, &mut rng))
                .collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let p = &self.scales[0];
        MultiscaleNet {
            scales: self
                .scales
                .iter()
                .map(|_| NetworkParams::zeros(p.layers(), p.atoms(), p.n_in(), p.n_res()))
                .collect(),
        }
    }

    pub fn layers(&self) -> usize {
        self.scales[0].layers()
    }

    pub fn atoms(&self) -> usize {
        self.scales[0].atoms()
    }

    pub fn n_in(&self) -> usize {
        self.scales[0].n_in()
    }

    pub fn n_res(&self) -> usize {
        self.scales[0].n_res()
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        self.scales.iter().flat_map(|p| p.slices()).collect()
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.scales
            .iter_mut()
            .flat_map(|p| p.slices_mut())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.scales.iter().map(|p| p.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn norm_sq(&self) -> f64 {
        self.scales.iter().map(|p| p.norm_sq()).sum()
    }

    pub fn clamp_thresholds(&mut self) {
        self.scales.iter_mut().for_each(|p| p.clamp_thresholds());
    }

    pub fn get(&self, index: usize) -> f64 {
        let mut k = index;
        for s in self.slices() {
            if k < s.len() {
                return s[k];
            }
            k -= s.len();
        }
        panic!("parameter index {index} out of range")
    }

    pub fn set(&mut self, index: usize, value: f64) {
        let mut k = index;
        for s in self.slices_mut() {
            if k < s.len() {
                s[k] = value;
                return;
            }
            k -= s.len();
        }
        panic!("parameter index {index} out of range")
    }

    /// `self += a * other`
    pub fn add_scaled(&mut self, a: f64, other: &MultiscaleNet) {
        for (x, y) in self.slices_mut().into_iter().zip(other.slices()) {
            x.iter_mut().zip(y).for_each(|(x, y)| *x += a * y);
        }
    }

    pub fn to_f32_precision(&self) -> Self {
        MultiscaleNet {
            scales: self.scales.iter().map(|p| p.to_f32_precision()).collect(),
        }
    }
}

//! Deterministic inputs for the benchmarks. Nothing here draws from an RNG
//! so timings compare across machines.

use ndarray::Array2;
use smokesr::fields::{GridShape, VectorField};
use smokesr::network::{Batch, LossWeights, MultiscaleNet, ResidualOperator};
use smokesr::patching::PatchGeometry;
use smokesr::synthesis::PatchCover;

fn wave(i: usize, j: usize) -> f64 {
    ((i * 7 + j * 13) as f64 * 0.37).sin()
}

/// A smooth 2D swirl with a little high-frequency content on top.
pub fn swirl(n: usize) -> VectorField {
    let shape = GridShape::new(vec![n, n], 1.0).expect("n >= 4");
    let h = std::f64::consts::TAU / n as f64;
    VectorField::from_fn(shape, |ix, out| {
        let (x, y) = (ix[0] as f64 * h, ix[1] as f64 * h);
        out[0] = y.sin() + 0.05 * (9.0 * x).cos();
        out[1] = -x.sin() + 0.05 * (11.0 * y).sin();
    })
}

/// A training batch, a matching network and loss operator for 2D patches.
pub fn training_problem(
    rows: usize,
    layers: usize,
    atoms: usize,
    n: usize,
    ratio: usize,
) -> (Batch, MultiscaleNet, ResidualOperator) {
    let geometry = PatchGeometry::new(2, n, ratio).expect("valid geometry");
    let n_in = 2 * n * n;
    let n_res = geometry.residual_len();
    let inputs = Array2::from_shape_fn((rows, n_in), |(i, j)| wave(i, j));
    let targets = Array2::from_shape_fn((rows, n_res), |(i, j)| 0.1 * wave(j, i));
    let net = MultiscaleNet::seeded(0, layers, atoms, n_in, n_res, 0.1, 0);
    let op = ResidualOperator::new(&geometry, LossWeights::default()).expect("weights");
    (Batch::new(inputs, targets).expect("batch"), net, op)
}

/// A cover of a `coarse`-sided grid with one residual patch per entry.
pub fn cover_with_patches(coarse: usize, n: usize, ratio: usize) -> (PatchCover, Vec<Vec<f64>>) {
    let geometry = PatchGeometry::new(2, n, ratio).expect("valid geometry");
    let cover = PatchCover::new(geometry, &[coarse, coarse], n - 2).expect("cover");
    let len = geometry.residual_len();
    let patches = (0..cover.len())
        .map(|p| (0..len).map(|j| 0.1 * wave(p, j)).collect())
        .collect();
    (cover, patches)
}

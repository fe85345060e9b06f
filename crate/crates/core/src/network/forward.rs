use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::{MultiscaleNet, NetworkParams};
use crate::sparse::soft_threshold;

/// Elementwise soft threshold `sgn(x) max(|x| - lambda, 0)`.
pub fn shrink(x: &[f64], lambda: f64) -> Vec<f64> {
    x.iter().map(|&v| soft_threshold(v, lambda)).collect()
}

/// Pre-activations and activations of every layer for a batch (one patch
/// per row).
#[derive(Debug, Clone)]
pub struct Trace {
    /// `S_t w_{t-1} + B y`, per layer.
    pub pre: Vec<Array2<f64>>,
    /// `w_t`, per layer.
    pub w: Vec<Array2<f64>>,
}

impl Trace {
    pub fn last(&self) -> &Array2<f64> {
        self.w.last().expect("at least one layer")
    }
}

pub fn forward_batch(y: ArrayView2<f64>, p: &NetworkParams) -> Trace {
    let by = y.dot(&p.b.t());
    let mut pre = Vec::with_capacity(p.layers());
    let mut w: Vec<Array2<f64>> = Vec::with_capacity(p.layers());
    for (t, (s, &lambda)) in p.s.iter().zip(&p.lambda).enumerate() {
        // w_0 = 0, so the first layer skips the S term
        let a = if t == 0 {
            by.clone()
        } else {
            w[t - 1].dot(&s.t()) + &by
        };
        w.push(a.mapv(|v| soft_threshold(v, lambda)));
        pre.push(a);
    }
    Trace { pre, w }
}

/// Final weights and all intermediate weights `w_1..w_T` for one input.
pub fn forward(y: ArrayView1<f64>, p: &NetworkParams) -> (Vec<f64>, Vec<Vec<f64>>) {
    let trace = forward_batch(y.insert_axis(ndarray::Axis(0)), p);
    let all: Vec<Vec<f64>> = trace.w.iter().map(|w| w.row(0).to_vec()).collect();
    (all.last().expect("at least one layer").clone(), all)
}

pub fn predict_residual(y: ArrayView1<f64>, p: &NetworkParams) -> Vec<f64> {
    let (w, _) = forward(y, p);
    p.dh.dot(&Array1::from(w)).to_vec()
}

/// Summed residual of every scale, one row per input row.
pub fn predict_batch(y: ArrayView2<f64>, net: &MultiscaleNet) -> Array2<f64> {
    let mut out = Array2::zeros((y.nrows(), net.n_res()));
    for p in &net.scales {
        let trace = forward_batch(y, p);
        out += &trace.last().dot(&p.dh.t());
    }
    out
}

impl MultiscaleNet {
    pub fn predict(&self, y: ArrayView1<f64>) -> Vec<f64> {
        predict_batch(y.insert_axis(ndarray::Axis(0)), self)
            .row(0)
            .to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shrink_examples() {
        assert_eq!(shrink(&[0.5, -0.2, 0.1], 0.3), vec![0.5 - 0.3, 0.0, 0.0]);
        assert_eq!(shrink(&[0.5, -0.2, 0.1], 0.0), vec![0.5, -0.2, 0.1]);
        assert_eq!(shrink(&[0.3, -0.3, 0.0], 0.3), vec![0.0; 3]);
    }

    #[test]
    fn single_layer_and_zero_input() {
        let p = NetworkParams::seeded(1, 4, 3, 5, 1.0, 3);
        let y = array![0.3, -0.7, 0.2];
        let (w, _) = forward(y.view(), &p);
        for (a, b) in w.iter().zip(shrink(&p.b.dot(&y).to_vec(), p.lambda[0])) {
            assert!((a - b).abs() < 1e-14);
        }
        let p = NetworkParams::seeded(3, 4, 3, 5, 1.0, 4);
        let (w, all) = forward(Array1::zeros(3).view(), &p);
        assert_eq!(all.len(), 3);
        assert!(w.iter().all(|&v| v == 0.0));
        assert!(predict_residual(Array1::zeros(3).view(), &p)
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn hand_unrolled_two_layers() {
        let mut p = NetworkParams::zeros(2, 2, 2, 3);
        p.b = array![[1.0, 2.0], [-1.0, 0.5]];
        p.s = vec![
            array![[9.0, 9.0], [9.0, 9.0]],
            array![[0.5, -1.0], [2.0, 0.25]],
        ];
        p.lambda = vec![0.5, 1.0];
        p.dh = array![[1.0, 0.0], [0.0, 1.0], [1.0, -1.0]];
        let y = array![1.0, 1.0];
        // B y = (3, -0.5); layer 1: shrink by 0.5 -> (2.5, 0)
        // layer 2: S w1 + B y = (1.25 + 3, 5 - 0.5) = (4.25, 4.5); shrink by 1 -> (3.25, 3.5)
        let (w, all) = forward(y.view(), &p);
        assert_eq!(all[0], vec![2.5, 0.0]);
        assert_eq!(w, vec![3.25, 3.5]);
        assert_eq!(predict_residual(y.view(), &p), vec![3.25, 3.5, -0.25]);
    }

    #[test]
    fn single_active_weight_gives_its_atom() {
        let mut p = NetworkParams::zeros(1, 3, 3, 4);
        p.b = Array2::eye(3);
        p.dh = Array2::from_shape_fn((4, 3), |(i, j)| (i * 3 + j) as f64);
        let r = predict_residual(array![0.0, 1.0, 0.0].view(), &p);
        assert_eq!(r, p.dh.column(1).to_vec());
    }

    #[test]
    fn batch_matches_single_rows() {
        let net = MultiscaleNet::seeded(2, 3, 5, 4, 6, 0.5, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = Array2::from_shape_fn((7, 4), |_| rng.random_range(-1.0..1.0));
        let r = predict_batch(y.view(), &net);
        for i in 0..7 {
            let sum: Vec<f64> = (0..6)
                .map(|k| {
                    net.scales
                        .iter()
                        .map(|p| predict_residual(y.row(i), p)[k])
                        .sum()
                })
                .collect();
            for (a, b) in r.row(i).iter().zip(&sum) {
                assert!((a - b).abs() < 1e-12);
            }
            assert_eq!(net.predict(y.row(i)), r.row(i).to_vec());
        }
        // zero input, zero residual on every scale
        assert!(predict_batch(Array2::zeros((2, 4)).view(), &net)
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn one_scale_is_the_single_network() {
        let p = NetworkParams::seeded(2, 4, 3, 5, 0.5, 2);
        let net = MultiscaleNet::single(p.clone());
        let y = array![0.5, -0.25, 1.0];
        assert_eq!(net.predict(y.view()), predict_residual(y.view(), &p));
    }

    #[test]
    fn sparsity_monotone_in_threshold_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = NetworkParams::seeded(3, 12, 6, 4, 0.5, 6);
        for _ in 0..50 {
            let y = Array1::from_shape_fn(6, |_| rng.random_range(-1.0..1.0));
            let trace = forward_batch(y.view().insert_axis(ndarray::Axis(0)), &p);
            let z = trace.pre.last().unwrap().row(0).to_vec();
            let base = shrink(&z, p.lambda[2]);
            for c in [1.0, 1.5, 2.0, 5.0] {
                let scaled = shrink(&z, c * p.lambda[2]);
                for (s, b) in scaled.iter().zip(&base) {
                    assert!(*s == 0.0 || *b != 0.0);
                }
            }
        }
    }

    #[test]
    fn homogeneous_without_thresholds() {
        let mut p = NetworkParams::seeded(3, 5, 4, 3, 0.5, 8);
        p.lambda = vec![0.0; 3];
        let y = array![0.2, -0.4, 0.9, 0.1];
        let (w1, _) = forward(y.view(), &p);
        let (w3, _) = forward((&y * 3.0).view(), &p);
        for (a, b) in w1.iter().zip(&w3) {
            assert!((3.0 * a - b).abs() < 1e-12);
        }
    }
}

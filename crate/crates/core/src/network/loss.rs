use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use super::forward::{forward_batch, Trace};
use super::{LossWeights, MultiscaleNet, NetworkParams};
use crate::error::{Error, Result};
use crate::fields::{axis_derivative, axis_derivative_adjoint_add};
use crate::patching::{PatchGeometry, PatchPair};

/// Rows per gradient chunk. Chunks are reduced in order, so results do not
/// depend on the thread count.
pub const CHUNK: usize = 256;

/// Network inputs and residual targets, one patch per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
}

impl Batch {
    pub fn new(inputs: Array2<f64>, targets: Array2<f64>) -> Result<Self> {
        if inputs.nrows() != targets.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} inputs but {} targets",
                inputs.nrows(),
                targets.nrows()
            )));
        }
        Ok(Batch { inputs, targets })
    }

    pub fn from_pairs(pairs: &[PatchPair]) -> Result<Self> {
        let first = pairs
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
        let (n_in, n_res) = (first.input.vector.len(), first.residual.len());
        if pairs
            .iter()
            .any(|p| p.input.vector.len() != n_in || p.residual.len() != n_res)
        {
            return Err(Error::DimensionMismatch("pairs differ in length".into()));
        }
        let inputs = Array2::from_shape_fn((pairs.len(), n_in), |(i, j)| pairs[i].input.vector[j]);
        let targets = Array2::from_shape_fn((pairs.len(), n_res), |(i, j)| pairs[i].residual[j]);
        Ok(Batch { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, rows: &[usize]) -> Batch {
        Batch {
            inputs: self.inputs.select(Axis(0), rows),
            targets: self.targets.select(Axis(0), rows),
        }
    }
}

/// Loss terms summed over a batch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossValue {
    pub local: f64,
    pub gradient: f64,
    pub divergence: f64,
    /// `|Theta|^2`, unweighted.
    pub params_sq: f64,
    pub total: f64,
}

impl LossValue {
    fn finish(mut self, w: &LossWeights, params_sq: f64) -> Self {
        self.params_sq = params_sq;
        self.total = self.data(w) + w.regularization * params_sq;
        self
    }

    /// Weighted data terms without the regularizer.
    pub fn data(&self, w: &LossWeights) -> f64 {
        w.local * self.local + w.gradient * self.gradient + w.divergence * self.divergence
    }

    fn add(&mut self, o: &LossValue) {
        self.local += o.local;
        self.gradient += o.gradient;
        self.divergence += o.divergence;
    }
}

/// Local, gradient and divergence energies of residual-patch errors, with
/// unit cell spacing on the fine patch.
#[derive(Debug, Clone)]
pub struct ResidualOperator {
    dims: Vec<usize>,
    cells: usize,
    weights: LossWeights,
}

impl ResidualOperator {
    pub fn new(geometry: &PatchGeometry, weights: LossWeights) -> Result<Self> {
        weights.validate()?;
        let side = geometry.fine_side();
        if side < 2 {
            return Err(Error::InvalidArgument(
                "fine patch side must be at least 2".into(),
            ));
        }
        Ok(ResidualOperator {
            dims: vec![side; geometry.dim],
            cells: geometry.fine_cells(),
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.cells * self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn weights(&self) -> &LossWeights {
        &self.weights
    }

    fn check(&self, n: usize) -> Result<()> {
        if n != self.len() {
            return Err(Error::DimensionMismatch(format!(
                "residual length {n}, geometry expects {}",
                self.len()
            )));
        }
        Ok(())
    }

    /// Energies of one error vector; writes `Q e` into `qe` when given,
    /// where `e^T Q e` is the weighted sum of the energies.
    fn energies(&self, e: &[f64], qe: Option<&mut [f64]>) -> LossValue {
        let d = self.dims.len();
        let n = self.cells;
        let w = &self.weights;
        let mut out = LossValue {
            local: e.iter().map(|v| v * v).sum(),
            ..LossValue::default()
        };
        let mut deriv = vec![0.0; n];
        let mut div = vec![0.0; n];
        let mut qe = qe;
        if let Some(q) = qe.as_deref_mut() {
            q.iter_mut().zip(e).for_each(|(q, e)| *q = w.local * e);
        }
        for c in 0..d {
            let comp = &e[c * n..(c + 1) * n];
            for a in 0..d {
                axis_derivative(comp, &self.dims, a, 1.0, &mut deriv);
                out.gradient += deriv.iter().map(|v| v * v).sum::<f64>();
                if a == c {
                    div.iter_mut().zip(&deriv).for_each(|(s, v)| *s += v);
                }
                if let Some(q) = qe.as_deref_mut() {
                    deriv.iter_mut().for_each(|v| *v *= w.gradient);
                    axis_derivative_adjoint_add(
                        &deriv,
                        &self.dims,
                        a,
                        1.0,
                        &mut q[c * n..(c + 1) * n],
                    );
                }
            }
        }
        out.divergence = div.iter().map(|v| v * v).sum();
        if let Some(q) = qe {
            div.iter_mut().for_each(|v| *v *= w.divergence);
            for a in 0..d {
                axis_derivative_adjoint_add(&div, &self.dims, a, 1.0, &mut q[a * n..(a + 1) * n]);
            }
        }
        out
    }

    /// Energies summed over the rows of `errors`.
    pub fn energy(&self, errors: ArrayView2<f64>) -> LossValue {
        let mut total = LossValue::default();
        for row in errors.rows() {
            let row = row.to_vec();
            total.add(&self.energies(&row, None));
        }
        total
    }
}

fn chunk_ranges(n: usize) -> Vec<(usize, usize)> {
    (0..n.div_ceil(CHUNK))
        .map(|c| (c * CHUNK, ((c + 1) * CHUNK).min(n)))
        .collect()
}

fn check_dims(batch: &Batch, net: &MultiscaleNet, op: &ResidualOperator) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if batch.inputs.ncols() != net.n_in() || batch.targets.ncols() != net.n_res() {
        return Err(Error::DimensionMismatch(format!(
            "batch is {}->{}, network is {}->{}",
            batch.inputs.ncols(),
            batch.targets.ncols(),
            net.n_in(),
            net.n_res()
        )));
    }
    op.check(net.n_res())
}

fn chunk_errors(
    inputs: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    net: &MultiscaleNet,
) -> (Vec<Trace>, Array2<f64>) {
    let traces: Vec<Trace> = net
        .scales
        .iter()
        .map(|p| forward_batch(inputs, p))
        .collect();
    let mut e = targets.to_owned();
    for (p, t) in net.scales.iter().zip(&traces) {
        e -= &t.last().dot(&p.dh.t());
    }
    (traces, e)
}

/// Total loss over the batch: weighted energies of `target - prediction`
/// plus `alpha_theta |Theta|^2`.
pub fn loss(batch: &Batch, net: &MultiscaleNet, op: &ResidualOperator) -> Result<LossValue> {
    check_dims(batch, net, op)?;
    let parts: Vec<LossValue> = chunk_ranges(batch.len())
        .into_par_iter()
        .map(|(a, b)| {
            let rows = ndarray::s![a..b, ..];
            let (_, e) = chunk_errors(batch.inputs.slice(rows), batch.targets.slice(rows), net);
            op.energy(e.view())
        })
        .collect();
    let mut total = LossValue::default();
    parts.iter().for_each(|p| total.add(p));
    Ok(total.finish(&op.weights, net.norm_sq()))
}

fn backprop(
    p: &NetworkParams,
    trace: &Trace,
    y: ArrayView2<f64>,
    g_r: &Array2<f64>,
    out: &mut NetworkParams,
) {
    out.dh += &g_r.t().dot(trace.last());
    let mut g_w = g_r.dot(&p.dh);
    for t in (0..p.layers()).rev() {
        let lambda = p.lambda[t];
        let pre = &trace.pre[t];
        // subgradient 0 at and inside the threshold
        let mut dl = 0.0;
        ndarray::Zip::from(&mut g_w).and(pre).for_each(|g, &a| {
            if a > lambda {
                dl -= *g;
            } else if a < -lambda {
                dl += *g;
            } else {
                *g = 0.0;
            }
        });
        out.lambda[t] += dl;
        out.b += &g_w.t().dot(&y);
        if t > 0 {
            out.s[t] += &g_w.t().dot(&trace.w[t - 1]);
            g_w = g_w.dot(&p.s[t]);
        }
    }
}

/// Loss and its exact gradient with respect to every parameter.
pub fn grad(
    batch: &Batch,
    net: &MultiscaleNet,
    op: &ResidualOperator,
) -> Result<(MultiscaleNet, LossValue)> {
    let (mut g, value) = data_grad(batch, net, op)?;
    g.add_scaled(2.0 * op.weights.regularization, net);
    Ok((g, value.finish(&op.weights, net.norm_sq())))
}

/// Gradient of the weighted data terms only; the returned value has no
/// regularizer filled in.
pub(crate) fn data_grad(
    batch: &Batch,
    net: &MultiscaleNet,
    op: &ResidualOperator,
) -> Result<(MultiscaleNet, LossValue)> {
    check_dims(batch, net, op)?;
    let parts: Vec<(MultiscaleNet, LossValue)> = chunk_ranges(batch.len())
        .into_par_iter()
        .map(|(a, b)| {
            let rows = ndarray::s![a..b, ..];
            let y = batch.inputs.slice(rows);
            let (traces, e) = chunk_errors(y, batch.targets.slice(rows), net);
            let mut value = LossValue::default();
            let mut g_r = Array2::zeros(e.raw_dim());
            let mut qe = vec![0.0; e.ncols()];
            for (i, row) in e.rows().into_iter().enumerate() {
                let row = row.to_vec();
                value.add(&op.energies(&row, Some(&mut qe)));
                // d(e^T Q e)/dr = -2 Q e
                g_r.row_mut(i)
                    .iter_mut()
                    .zip(&qe)
                    .for_each(|(g, q)| *g = -2.0 * q);
            }
            let mut g = net.zeros_like();
            for ((p, t), gp) in net.scales.iter().zip(&traces).zip(&mut g.scales) {
                backprop(p, t, y, &g_r, gp);
            }
            (g, value)
        })
        .collect();
    let mut g = net.zeros_like();
    let mut total = LossValue::default();
    for (pg, pv) in &parts {
        g.add_scaled(1.0, pg);
        total.add(pv);
    }
    Ok((g, total))
}

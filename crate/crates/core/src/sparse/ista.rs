use ndarray::{Array1, ArrayView1, ArrayView2};

/// `sgn(x) max(|x| - t, 0)`.
#[inline]
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// `0.5 |y - D w|^2 + lambda |w|_1`.
pub fn lasso_objective(
    y: ArrayView1<f64>,
    d: ArrayView2<f64>,
    w: ArrayView1<f64>,
    lambda: f64,
) -> f64 {
    let r = &y - &d.dot(&w);
    0.5 * r.dot(&r) + lambda * w.iter().map(|v| v.abs()).sum::<f64>()
}

/// Largest eigenvalue of `D^T D` by power iteration.
pub fn spectral_norm_sq(d: ArrayView2<f64>) -> f64 {
    let n = d.ncols();
    let mut v = Array1::from_elem(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..500 {
        let next = d.t().dot(&d.dot(&v));
        let norm = next.dot(&next).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let converged = (norm - lambda).abs() <= 1e-12 * norm;
        lambda = norm;
        v = next / norm;
        if converged {
            break;
        }
    }
    lambda
}

/// Iterative shrinkage-thresholding from `w = 0`:
/// `w <- soft(S w + B y, lambda h)` with `B = h D^T`, `S = I - B D`.
pub fn ista(y: ArrayView1<f64>, d: ArrayView2<f64>, lambda: f64, iters: usize, h: f64) -> Vec<f64> {
    let by = d.t().dot(&y) * h;
    let gram = d.t().dot(&d) * h;
    let t = lambda * h;
    let mut w = Array1::<f64>::zeros(d.ncols());
    for _ in 0..iters {
        let z = &w - &gram.dot(&w) + &by;
        w = z.mapv(|v| soft_threshold(v, t));
    }
    w.to_vec()
}

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::fields::VectorField;

/// In-place n-D forward FFT of a row-major array, one axis at a time.
fn fft_nd(data: &mut [Complex<f64>], dims: &[usize]) {
    let mut planner = FftPlanner::new();
    let total = data.len();
    let mut line = Vec::new();
    for (axis, &n) in dims.iter().enumerate() {
        let fft = planner.plan_fft_forward(n);
        let stride: usize = dims[axis + 1..].iter().product();
        line.resize(n, Complex::default());
        for base in 0..total {
            if !(base / stride).is_multiple_of(n) {
                continue;
            }
            for (i, l) in line.iter_mut().enumerate() {
                *l = data[base + i * stride];
            }
            fft.process(&mut line);
            for (i, l) in line.iter().enumerate() {
                data[base + i * stride] = *l;
            }
        }
    }
}

fn hann(n: usize) -> Vec<f64> {
    // periodic Hann, matching the FFT's periodic extension
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Product of per-axis Hann windows at every cell.
pub fn window(dims: &[usize]) -> Vec<f64> {
    let per_axis: Vec<Vec<f64>> = dims.iter().map(|&n| hann(n)).collect();
    let total: usize = dims.iter().product();
    (0..total)
        .map(|mut idx| {
            let mut w = 1.0;
            for a in (0..dims.len()).rev() {
                w *= per_axis[a][idx % dims[a]];
                idx /= dims[a];
            }
            w
        })
        .collect()
}

/// Shell-binned kinetic energy `E(k) = 1/2 sum |u_hat|^2` over integer
/// shells `k <= |kappa| < k + 1`, with `u_hat = FFT(u) / N`. Every mode is
/// binned, so the shells sum to `1/2 mean |u|^2` of the (windowed) field.
/// Wavenumbers are per-axis mode indices.
pub fn energy_spectrum_with(f: &VectorField, windowed: bool) -> Vec<(usize, f64)> {
    let dims = f.shape().dims();
    let total = f.shape().len();
    let w = if windowed {
        window(dims)
    } else {
        vec![1.0; total]
    };
    let kappa2: Vec<f64> = (0..total)
        .map(|mut idx| {
            let mut s = 0.0;
            for a in (0..dims.len()).rev() {
                let i = idx % dims[a];
                idx /= dims[a];
                let k = if i <= dims[a] / 2 {
                    i as f64
                } else {
                    i as f64 - dims[a] as f64
                };
                s += k * k;
            }
            s
        })
        .collect();
    let kmax = kappa2.iter().fold(0.0f64, |m, &k| m.max(k)).sqrt().floor() as usize;
    let mut e = vec![0.0; kmax + 1];
    let norm = 1.0 / (total as f64 * total as f64);
    let mut buf = vec![Complex::default(); total];
    for comp in f.components() {
        for ((b, &v), &w) in buf.iter_mut().zip(comp).zip(&w) {
            *b = Complex::new(v * w, 0.0);
        }
        fft_nd(&mut buf, dims);
        for (b, &k2) in buf.iter().zip(&kappa2) {
            e[k2.sqrt().floor() as usize] += 0.5 * b.norm_sqr() * norm;
        }
    }
    e.into_iter().enumerate().collect()
}

/// Hann-windowed energy spectrum.
pub fn energy_spectrum(f: &VectorField) -> Vec<(usize, f64)> {
    energy_spectrum_with(f, true)
}

/// Largest `k` such that `|log10 E_a(k') - log10 E_b(k')| <= tol` for every
/// `1 <= k' <= k`; 0 when shell 1 already disagrees. Shells where both are
/// zero agree, shells where only one is zero do not.
pub fn critical_wavenumber(a: &[(usize, f64)], b: &[(usize, f64)], tol: f64) -> usize {
    let mut last = 0;
    for ((k, ea), (_, eb)) in a.iter().zip(b).skip(1) {
        let ok = match (*ea > 0.0, *eb > 0.0) {
            (true, true) => (ea.log10() - eb.log10()).abs() <= tol,
            (false, false) => true,
            _ => false,
        };
        if !ok {
            break;
        }
        last = *k;
    }
    last
}

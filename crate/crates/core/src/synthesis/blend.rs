use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PatchCover;
use crate::error::{Error, Result};

/// Widths of the blending kernels: `sigma_x` in fine cells inside a patch,
/// `sigma_tau` over the distance rank of overlapping patches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlendConfig {
    pub sigma_x: f64,
    pub sigma_tau: f64,
}

impl Default for BlendConfig {
    fn default() -> Self {
        BlendConfig {
            sigma_x: 2.5,
            sigma_tau: 1.5,
        }
    }
}

/// Separable Gaussian smoothing of a `side^d` block, truncated at 3 sigma
/// and renormalized where the kernel leaves the block.
pub fn smooth_block(values: &mut [f64], side: usize, d: usize, sigma: f64) {
    if sigma <= 0.0 || side < 2 {
        return;
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let mut line = vec![0.0; side];
    for axis in 0..d {
        let stride = side.pow((d - 1 - axis) as u32);
        for base in 0..values.len() {
            // visit each line once, from its first cell
            if !(base / stride).is_multiple_of(side) {
                continue;
            }
            for (i, l) in line.iter_mut().enumerate() {
                *l = values[base + i * stride];
            }
            for i in 0..side as isize {
                let (mut acc, mut norm) = (0.0, 0.0);
                for (kk, &w) in kernel.iter().enumerate() {
                    let j = i + kk as isize - radius;
                    if (0..side as isize).contains(&j) {
                        acc += w * line[j as usize];
                        norm += w;
                    }
                }
                values[base + i as usize * stride] = acc / norm;
            }
        }
    }
}

/// Blends per-patch fields (component-major `d x side^d` each, one per
/// cover patch) into fine-grid components. Each patch is smoothed first;
/// every fine cell then averages its covering patches with Gaussian
/// weights in their distance rank (0 for the nearest center, ties share
/// a rank).
pub fn blend(cover: &PatchCover, patches: &[Vec<f64>], cfg: &BlendConfig) -> Result<Vec<Vec<f64>>> {
    let g = &cover.geometry;
    let (d, side) = (g.dim, g.fine_side());
    let cells = g.fine_cells();
    if patches.len() != cover.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} patches for a cover of {}",
            patches.len(),
            cover.len()
        )));
    }
    if patches.iter().any(|p| p.len() != d * cells) {
        return Err(Error::DimensionMismatch(format!(
            "patches must hold {} values",
            d * cells
        )));
    }
    let smoothed: Vec<Vec<f64>> = patches
        .par_iter()
        .map(|p| {
            let mut p = p.clone();
            for c in 0..d {
                smooth_block(&mut p[c * cells..(c + 1) * cells], side, d, cfg.sigma_x);
            }
            p
        })
        .collect();

    let fine = cover.fine_dims();
    let total: usize = fine.iter().product();
    let contrib: Vec<Vec<Vec<(usize, usize)>>> =
        (0..d).map(|a| cover.axis_contributors(a)).collect();
    let counts: Vec<usize> = cover.starts.iter().map(|s| s.len()).collect();
    let inv_two_var = 1.0 / (2.0 * cfg.sigma_tau * cfg.sigma_tau);

    let rows: Vec<Vec<f64>> = (0..total)
        .into_par_iter()
        .map(|idx| -> Result<Vec<f64>> {
            let mut x = [0usize; 3];
            let mut rem = idx;
            for a in (0..d).rev() {
                x[a] = rem % fine[a];
                rem /= fine[a];
            }
            // (patch, offset in patch, squared distance) for every covering patch
            let mut hits: Vec<(usize, usize, f64)> = Vec::with_capacity(8);
            let lists: Vec<&Vec<(usize, usize)>> = (0..d).map(|a| &contrib[a][x[a]]).collect();
            if lists.iter().any(|l| l.is_empty()) {
                return Err(Error::Uncovered(x[..d].to_vec()));
            }
            let mut pick = [0usize; 3];
            'odometer: loop {
                let (mut patch, mut off, mut dist) = (0, 0, 0.0);
                for a in 0..d {
                    let (i, o) = lists[a][pick[a]];
                    patch = patch * counts[a] + i;
                    off = off * side + o;
                    let dx = x[a] as f64 - cover.fine_middle(a, i);
                    dist += dx * dx;
                }
                hits.push((patch, off, dist));
                let mut a = d;
                loop {
                    if a == 0 {
                        break 'odometer;
                    }
                    a -= 1;
                    pick[a] += 1;
                    if pick[a] < lists[a].len() {
                        break;
                    }
                    pick[a] = 0;
                }
            }
            let mut out = vec![0.0; d];
            let mut wsum = 0.0;
            for &(patch, off, dist) in &hits {
                let rank = hits.iter().filter(|h| h.2 < dist - 1e-9).count() as f64;
                let w = (-rank * rank * inv_two_var).exp();
                wsum += w;
                for (c, o) in out.iter_mut().enumerate() {
                    *o += w * smoothed[patch][c * cells + off];
                }
            }
            out.iter_mut().for_each(|o| *o /= wsum);
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut comps = vec![vec![0.0; total]; d];
    for (i, r) in rows.into_iter().enumerate() {
        for c in 0..d {
            comps[c][i] = r[c];
        }
    }
    Ok(comps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patching::PatchGeometry;

    #[test]
    fn smoothing_keeps_constants_and_mass_center() {
        let mut v = vec![3.0; 64];
        smooth_block(&mut v, 8, 2, 2.5);
        assert!(v.iter().all(|x| (x - 3.0).abs() < 1e-12));
        let mut spike = vec![0.0; 9];
        spike[4] = 1.0;
        smooth_block(&mut spike, 9, 1, 1.0);
        assert!((spike[3] - spike[5]).abs() < 1e-15 && spike[4] > spike[3]);
    }

    #[test]
    fn constant_patches_give_a_constant_field() {
        let g = PatchGeometry::new(2, 5, 2).unwrap();
        let cover = PatchCover::with_default_stride(g, &[14, 9]).unwrap();
        let patches = vec![[vec![1.5; 100], vec![-2.0; 100]].concat(); cover.len()];
        let out = blend(&cover, &patches, &BlendConfig::default()).unwrap();
        assert_eq!(out[0].len(), 28 * 18);
        assert!(out[0].iter().all(|v| (v - 1.5).abs() < 1e-12));
        assert!(out[1].iter().all(|v| (v + 2.0).abs() < 1e-12));
    }

    #[test]
    fn single_patch_is_only_smoothed() {
        let g = PatchGeometry::new(2, 3, 2).unwrap();
        let cover = PatchCover::new(g, &[3, 3], 3).unwrap();
        let patch: Vec<f64> = (0..72).map(|i| ((i * 7) % 11) as f64).collect();
        let out = blend(
            &cover,
            std::slice::from_ref(&patch),
            &BlendConfig::default(),
        )
        .unwrap();
        let mut expect = patch;
        smooth_block(&mut expect[..36], 6, 2, 2.5);
        smooth_block(&mut expect[36..], 6, 2, 2.5);
        assert_eq!([out[0].clone(), out[1].clone()].concat(), expect);
    }

    #[test]
    fn two_patch_overlap_is_bounded_and_monotone() {
        // 1 row of patches along axis 0: starts 0 and 2 with n = 4, ratio 1
        let g = PatchGeometry::new(2, 4, 1).unwrap();
        let cover = PatchCover::new(g, &[6, 4], 2).unwrap();
        assert_eq!(cover.len(), 2);
        let (a, b) = (1.0, 5.0);
        let patches = vec![vec![a; 32], vec![b; 32]];
        let cfg = BlendConfig::default();
        let out = blend(&cover, &patches, &cfg).unwrap();
        let w1 = (-1.0_f64 / (2.0 * 1.5 * 1.5)).exp();
        // cells 2, 3 along axis 0 are shared; centers at 1.5 and 3.5
        for j in 0..4 {
            let v: Vec<f64> = (0..6).map(|i| out[0][i * 4 + j]).collect();
            assert!((v[0] - a).abs() < 1e-12 && (v[5] - b).abs() < 1e-12);
            assert!((v[2] - (a + w1 * b) / (1.0 + w1)).abs() < 1e-12);
            assert!((v[3] - (b + w1 * a) / (1.0 + w1)).abs() < 1e-12);
            for w in v.windows(2) {
                assert!(w[1] >= w[0] - 1e-12);
            }
        }
    }

    #[test]
    fn shifting_patch_contents_shifts_the_output() {
        let g = PatchGeometry::new(2, 4, 2).unwrap();
        let cover = PatchCover::new(g, &[22, 4], 2).unwrap();
        // starts along axis 0: 0, 2, .., 18 (10 patches)
        let content =
            |k: usize| -> Vec<f64> { (0..128).map(|i| ((i * (k + 3)) % 13) as f64).collect() };
        let patches: Vec<Vec<f64>> = (0..10usize).map(content).collect();
        let shifted: Vec<Vec<f64>> = (0..10usize).map(|k| content(k.saturating_sub(1))).collect();
        let cfg = BlendConfig::default();
        let a = blend(&cover, &patches, &cfg).unwrap();
        let b = blend(&cover, &shifted, &cfg).unwrap();
        // one stride is 4 fine cells; compare away from both ends
        let row = 8;
        for x in 8..30 {
            for c in 0..2 {
                for y in 0..row {
                    assert!(
                        (b[c][(x + 4) * row + y] - a[c][x * row + y]).abs() < 1e-12,
                        "x {x} y {y}"
                    );
                }
            }
        }
    }

    #[test]
    fn mismatched_inputs_fail() {
        let g = PatchGeometry::new(2, 4, 1).unwrap();
        let cover = PatchCover::new(g, &[6, 4], 2).unwrap();
        assert!(blend(&cover, &[vec![0.0; 32]], &BlendConfig::default()).is_err());
        assert!(blend(
            &cover,
            &[vec![0.0; 31], vec![0.0; 32]],
            &BlendConfig::default()
        )
        .is_err());
    }
}

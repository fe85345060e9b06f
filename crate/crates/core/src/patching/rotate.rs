use super::{EncodingMode, PatchGeometry, PatchPair};
use crate::error::{Error, Result};
use crate::fields::ops::curl_components;

/// Axis-aligned rotation: a signed permutation matrix with determinant 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rotation {
    dim: usize,
    m: [[i32; 3]; 3],
}

impl Rotation {
    pub fn identity(dim: usize) -> Self {
        let mut m = [[0; 3]; 3];
        for (a, row) in m.iter_mut().enumerate().take(dim) {
            row[a] = 1;
        }
        Rotation { dim, m }
    }

    /// Rotation by `quarter_turns * pi/2`. In 2D the axis argument is
    /// ignored; positive turns take axis 0 toward axis 1.
    pub fn about_axis(dim: usize, axis: usize, quarter_turns: i32) -> Self {
        let k = quarter_turns.rem_euclid(4);
        let (c, s) = [(1, 0), (0, 1), (-1, 0), (0, -1)][k as usize];
        let mut r = Rotation::identity(dim);
        let (b, e) = if dim == 2 {
            (0, 1)
        } else {
            ((axis + 1) % 3, (axis + 2) % 3)
        };
        r.m[b][b] = c;
        r.m[b][e] = -s;
        r.m[e][b] = s;
        r.m[e][e] = c;
        r
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> [[i32; 3]; 3] {
        self.m
    }

    /// `self * other`: apply `other` first.
    pub fn compose(&self, other: &Rotation) -> Rotation {
        let mut m = [[0; 3]; 3];
        for i in 0..self.dim {
            for j in 0..self.dim {
                m[i][j] = (0..self.dim).map(|k| self.m[i][k] * other.m[k][j]).sum();
            }
        }
        Rotation { dim: self.dim, m }
    }

    pub fn inverse(&self) -> Rotation {
        let mut m = [[0; 3]; 3];
        for i in 0..self.dim {
            for j in 0..self.dim {
                m[i][j] = self.m[j][i];
            }
        }
        Rotation { dim: self.dim, m }
    }

    /// Generator set: identity plus quarter, half and three-quarter turns
    /// about each axis (4 rotations in 2D, 10 in 3D).
    pub fn axis_set(dim: usize) -> Vec<Rotation> {
        let mut out = vec![Rotation::identity(dim)];
        let axes = if dim == 2 { 1 } else { 3 };
        for axis in 0..axes {
            for k in 1..4 {
                out.push(Rotation::about_axis(dim, axis, k));
            }
        }
        out
    }

    /// The full rotation group of the square (4) or cube (24).
    pub fn group(dim: usize) -> Vec<Rotation> {
        let gens = Rotation::axis_set(dim);
        let mut out = vec![Rotation::identity(dim)];
        let mut i = 0;
        while i < out.len() {
            for g in &gens {
                let r = g.compose(&out[i]);
                if !out.contains(&r) {
                    out.push(r);
                }
            }
            i += 1;
        }
        out
    }

    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        for i in 0..self.dim {
            out[i] = (0..self.dim).map(|k| self.m[i][k] as f64 * v[k]).sum();
        }
    }

    /// Source index for each destination cell of a cube of `side` cells,
    /// rotating about the cube center.
    pub fn index_map(&self, side: usize) -> Vec<usize> {
        let d = self.dim;
        let cells = side.pow(d as u32);
        let s1 = side as i64 - 1;
        let inv = self.inverse();
        let mut map = Vec::with_capacity(cells);
        let mut q = [0i64; 3];
        for idx in 0..cells {
            let mut rem = idx;
            for a in (0..d).rev() {
                q[a] = 2 * (rem % side) as i64 - s1;
                rem /= side;
            }
            let mut src = 0;
            for a in 0..d {
                let p: i64 = (0..d).map(|k| inv.m[a][k] as i64 * q[k]).sum();
                src = src * side + ((p + s1) / 2) as usize;
            }
            map.push(src);
        }
        map
    }
}

/// Rotates `blocks` consecutive groups of `comps` component grids. Vector
/// groups (`comps == dim`) also have their components rotated; scalar
/// groups are only permuted.
fn rotate_blocks(
    values: &[f64],
    out: &mut Vec<f64>,
    rot: &Rotation,
    side: usize,
    blocks: usize,
    comps: usize,
) {
    let cells = side.pow(rot.dim as u32);
    let map = rot.index_map(side);
    let m = rot.m;
    for b in 0..blocks {
        let base = b * comps * cells;
        let block = &values[base..base + comps * cells];
        if comps == 1 {
            out.extend(map.iter().map(|&s| block[s]));
            continue;
        }
        for a in 0..comps {
            out.extend(map.iter().map(|&s| {
                (0..comps)
                    .filter(|&k| m[a][k] != 0)
                    .map(|k| m[a][k] as f64 * block[k * cells + s])
                    .sum::<f64>()
            }));
        }
    }
}

/// Rotates an encoded input vector of the given mode.
pub fn rotate_vector(
    vector: &[f64],
    rot: &Rotation,
    geometry: &PatchGeometry,
    mode: &EncodingMode,
) -> Result<Vec<f64>> {
    if !mode.allows_rotation() {
        return Err(Error::InvalidArgument(format!(
            "{} patches cannot be rotated",
            mode.kind
        )));
    }
    let d = geometry.dim;
    if rot.dim != d || vector.len() != mode.input_len(d, geometry.n) {
        return Err(Error::DimensionMismatch(format!(
            "rotation of dim {} on a {}-value vector (dim {d})",
            rot.dim,
            vector.len()
        )));
    }
    let frames = mode.frames_needed();
    let cells = geometry.coarse_cells();
    let mut out = Vec::with_capacity(vector.len());
    rotate_blocks(vector, &mut out, rot, geometry.n, frames, d);
    if mode.include_vorticity {
        let cw = curl_components(d);
        rotate_blocks(
            &vector[frames * d * cells..],
            &mut out,
            rot,
            geometry.n,
            frames,
            cw,
        );
    }
    Ok(out)
}

/// Rotates input and residual of a pair by the same rotation.
pub fn rotate_pair(
    pair: &PatchPair,
    rot: &Rotation,
    geometry: &PatchGeometry,
    mode: &EncodingMode,
) -> Result<PatchPair> {
    let input = rotate_vector(&pair.input.vector, rot, geometry, mode)?;
    if pair.residual.len() != geometry.residual_len() {
        return Err(Error::DimensionMismatch(format!(
            "residual has {} values, geometry needs {}",
            pair.residual.len(),
            geometry.residual_len()
        )));
    }
    let mut residual = Vec::with_capacity(pair.residual.len());
    rotate_blocks(
        &pair.residual,
        &mut residual,
        rot,
        geometry.fine_side(),
        1,
        geometry.dim,
    );
    let mut out = pair.clone();
    out.input.vector = input;
    out.residual = residual;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::{
        encode_patch, residual_target, CoarseFrame, EncodedPatch, NormalizationInfo,
    };
    use super::*;
    use crate::fields::{upsample_uniform, GridShape, VectorField};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(dims: &[usize], seed: u64) -> VectorField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        VectorField::from_fn(GridShape::unit(dims).unwrap(), |_, o| {
            o.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0))
        })
    }

    /// Rotates a whole cubic field about the domain center.
    fn rotate_field(f: &VectorField, rot: &Rotation) -> VectorField {
        let side = f.shape().dims()[0];
        let map = rot.index_map(side);
        let d = f.ndim();
        let mut tmp = [0.0; 3];
        let mut src = [0.0; 3];
        let mut comps = vec![vec![0.0; f.shape().len()]; d];
        for (j, &s) in map.iter().enumerate() {
            for a in 0..d {
                src[a] = f.component(a)[s];
            }
            rot.apply(&src[..d], &mut tmp[..d]);
            for a in 0..d {
                comps[a][j] = tmp[a];
            }
        }
        VectorField::new(f.shape().clone(), comps).unwrap()
    }

    fn rotate_center(c: &[usize], side: usize, rot: &Rotation) -> Vec<usize> {
        let d = c.len();
        let s1 = side as i64 - 1;
        let q: Vec<f64> = c.iter().map(|&x| (2 * x as i64 - s1) as f64).collect();
        let mut p = vec![0.0; d];
        rot.apply(&q, &mut p);
        p.iter().map(|&x| ((x as i64 + s1) / 2) as usize).collect()
    }

    #[test]
    fn group_sizes_and_closure() {
        assert_eq!(Rotation::axis_set(2).len(), 4);
        assert_eq!(Rotation::axis_set(3).len(), 10);
        for d in [2, 3] {
            let g = Rotation::group(d);
            assert_eq!(g.len(), if d == 2 { 4 } else { 24 });
            for a in &g {
                assert!(g.contains(&a.inverse()));
                for b in &g {
                    assert!(g.contains(&a.compose(b)));
                }
            }
        }
    }

    #[test]
    fn quarter_turn_maps_x_to_y() {
        let r = Rotation::about_axis(2, 0, 1);
        let mut out = [0.0; 2];
        r.apply(&[1.0, 0.0], &mut out);
        assert_eq!(out, [0.0, 1.0]);

        let g = PatchGeometry::new(2, 3, 2).unwrap();
        let mode = EncodingMode::velocity_only();
        let mut v = vec![1.0; 9];
        v.extend(vec![0.0; 9]);
        let pair = PatchPair {
            input: EncodedPatch {
                vector: v,
                center: vec![1, 1],
                frame: 0,
            },
            residual: vec![0.0; g.residual_len()],
            ratio: 2,
            sequence: 0,
        };
        let p = rotate_pair(&pair, &r, &g, &mode).unwrap();
        assert!(p.input.vector[..9].iter().all(|&x| x == 0.0));
        assert!(p.input.vector[9..].iter().all(|&x| x == 1.0));
    }

    #[test]
    fn identity_and_half_turn_involution() {
        let g = PatchGeometry::new(2, 5, 2).unwrap();
        let mode = EncodingMode::phase_space(1, true);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pair = PatchPair {
            input: EncodedPatch {
                vector: (0..mode.input_len(2, 5))
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect(),
                center: vec![3, 3],
                frame: 2,
            },
            residual: (0..g.residual_len())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
            ratio: 2,
            sequence: 0,
        };
        assert_eq!(
            rotate_pair(&pair, &Rotation::identity(2), &g, &mode).unwrap(),
            pair
        );
        let half = Rotation::about_axis(2, 0, 2);
        let once = rotate_pair(&pair, &half, &g, &mode).unwrap();
        assert_ne!(once, pair);
        assert_eq!(rotate_pair(&once, &half, &g, &mode).unwrap(), pair);
    }

    #[test]
    fn space_time_rejected() {
        let g = PatchGeometry::new(2, 5, 2).unwrap();
        let mode = EncodingMode::space_time(Vec::new());
        let v = vec![0.0; mode.input_len(2, 5)];
        assert!(rotate_vector(&v, &Rotation::identity(2), &g, &mode).is_err());
    }

    #[test]
    fn rotating_fields_commutes_with_encoding() {
        for (d, side, ratio) in [(2usize, 12usize, 2usize), (3, 8, 2)] {
            let dims = vec![side; d];
            let fine_dims = vec![side * ratio; d];
            let g = PatchGeometry::new(d, 3, ratio).unwrap();
            let mode = EncodingMode::phase_space(1, true);
            let norm = NormalizationInfo::new(1.3).unwrap();
            let a = random_field(&dims, 1);
            let b = random_field(&dims, 2);
            let fine = random_field(&fine_dims, 3);
            let center: Vec<usize> = (0..d).map(|k| 3 + k).collect();
            let build = |a: &VectorField, b: &VectorField, fine: &VectorField, c: &[usize]| {
                let (fa, fb) = (CoarseFrame::new(a.clone()), CoarseFrame::new(b.clone()));
                let input = encode_patch(&[&fa, &fb], 1, c, &g, &mode, &[], &norm).unwrap();
                let up = upsample_uniform(a, ratio).unwrap();
                let residual = residual_target(fine, &up, c, &dims, &g, &norm).unwrap();
                PatchPair {
                    input,
                    residual,
                    ratio,
                    sequence: 0,
                }
            };
            let base = build(&a, &b, &fine, &center);
            for rot in Rotation::group(d) {
                let rotated = build(
                    &rotate_field(&a, &rot),
                    &rotate_field(&b, &rot),
                    &rotate_field(&fine, &rot),
                    &rotate_center(&center, side, &rot),
                );
                let induced = rotate_pair(&base, &rot, &g, &mode).unwrap();
                for (x, y) in rotated.input.vector.iter().zip(&induced.input.vector) {
                    assert!((x - y).abs() < 1e-12, "{rot:?}");
                }
                for (x, y) in rotated.residual.iter().zip(&induced.residual) {
                    assert!((x - y).abs() < 1e-12, "{rot:?}");
                }
            }
        }
    }
}

use crate::error::{Error, Result};

const BITS: u32 = 10;

/// Interleaves the low bits of `coords`, axis 0 least significant.
pub fn morton_index(coords: &[u32], bits: u32) -> u64 {
    let d = coords.len() as u32;
    let mut code = 0u64;
    for b in 0..bits {
        for (a, &c) in coords.iter().enumerate() {
            code |= (((c >> b) & 1) as u64) << (b * d + a as u32);
        }
    }
    code
}

/// Morton code of a cell, normalized to `[0, 1]`. Each coordinate is mapped
/// to `[0, 1]` and quantized to 10 bits before interleaving.
pub fn morton_code(center: &[usize], dims: &[usize]) -> Result<f64> {
    if center.len() != dims.len() || center.iter().zip(dims).any(|(&c, &d)| c >= d) {
        return Err(Error::PatchOutOfBounds {
            center: center.to_vec(),
            dims: dims.to_vec(),
        });
    }
    let max_q = (1u32 << BITS) - 1;
    let q: Vec<u32> = center
        .iter()
        .zip(dims)
        .map(|(&c, &d)| {
            let t = if d > 1 {
                c as f64 / (d - 1) as f64
            } else {
                0.0
            };
            (t * max_q as f64).round() as u32
        })
        .collect();
    let full = (1u64 << (BITS as u64 * dims.len() as u64)) - 1;
    Ok(morton_index(&q, BITS) as f64 / full as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Reference: build the code bit by bit from a string of interleaved bits.
    fn reference(coords: &[u32], bits: u32) -> u64 {
        let mut s = String::new();
        for b in (0..bits).rev() {
            for c in coords.iter().rev() {
                s.push(if (c >> b) & 1 == 1 { '1' } else { '0' });
            }
        }
        u64::from_str_radix(&s, 2).unwrap()
    }

    #[test]
    fn two_bit_demo() {
        assert_eq!(morton_index(&[3, 1, 2], 2), 43);
        assert_eq!(reference(&[3, 1, 2], 2), 43);
    }

    #[test]
    fn matches_reference_loop() {
        for x in 0..16u32 {
            for y in 0..16u32 {
                assert_eq!(morton_index(&[x, y], 4), reference(&[x, y], 4));
                assert_eq!(
                    morton_index(&[x, y, x ^ y], 4),
                    reference(&[x, y, x ^ y], 4)
                );
            }
        }
    }

    #[test]
    fn corners() {
        assert_eq!(morton_code(&[0, 0, 0], &[8, 9, 10]).unwrap(), 0.0);
        assert_eq!(morton_code(&[7, 8, 9], &[8, 9, 10]).unwrap(), 1.0);
        assert_eq!(morton_code(&[31, 31], &[32, 32]).unwrap(), 1.0);
        let mid = morton_code(&[5, 3], &[32, 32]).unwrap();
        assert!(mid > 0.0 && mid < 1.0);
    }

    #[test]
    fn out_of_range() {
        assert!(matches!(
            morton_code(&[32, 0], &[32, 32]),
            Err(Error::PatchOutOfBounds { .. })
        ));
    }
}

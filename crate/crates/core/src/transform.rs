//! Orthonormal 2D DCT-II, mid-tread quantization, and zig-zag scan order.

use std::fmt;
use std::sync::OnceLock;

/// Block sizes with a transform: luma 4/8/16 plus the 2x2 chroma companion
/// of the smallest luma block.
pub const SUPPORTED_SIZES: [usize; 4] = [2, 4, 8, 16];

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TransformError {
    UnsupportedSize(usize),
    NonPositiveStep,
}

impl fmt::Display for TransformError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransformError::UnsupportedSize(n) => write!(f, "unsupported transform size {n}"),
            TransformError::NonPositiveStep => write!(f, "quantization step must be positive"),
        }
    }
}

impl std::error::Error for TransformError {}

struct Basis {
    n: usize,
    /// Row-major `c[k * n + i] = s_k * cos(pi * (2i + 1) * k / (2n))`.
    c: Vec<f64>,
}

fn basis(n: usize) -> Result<&'static Basis, TransformError> {
    static TABLES: OnceLock<Vec<Basis>> = OnceLock::new();
    let tables = TABLES.get_or_init(|| {
        SUPPORTED_SIZES
            .iter()
            .map(|&n| {
                let mut c = vec![0.0; n * n];
                for k in 0..n {
                    let s = if k == 0 {
                        (1.0 / n as f64).sqrt()
                    } else {
                        (2.0 / n as f64).sqrt()
                    };
                    for i in 0..n {
                        c[k * n + i] = s
                            * (std::f64::consts::PI * (2.0 * i as f64 + 1.0) * k as f64
                                / (2.0 * n as f64))
                                .cos();
                    }
                }
                Basis { n, c }
            })
            .collect()
    });
    tables
        .iter()
        .find(|b| b.n == n)
        .ok_or(TransformError::UnsupportedSize(n))
}

/// Forward 2D DCT-II of an `n x n` row-major block.
pub fn forward_dct2d(block: &[f64], n: usize) -> Result<Vec<f64>, TransformError> {
    let b = basis(n)?;
    assert_eq!(block.len(), n * n);
    // Y = C * X * C^T
    let mut tmp = vec![0.0; n * n];
    for k in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for i in 0..n {
                acc += b.c[k * n + i] * block[i * n + j];
            }
            tmp[k * n + j] = acc;
        }
    }
    let mut out = vec![0.0; n * n];
    for k in 0..n {
        for l in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += tmp[k * n + j] * b.c[l * n + j];
            }
            out[k * n + l] = acc;
        }
    }
    Ok(out)
}

/// Inverse of [`forward_dct2d`].
pub fn inverse_dct2d(coeffs: &[f64], n: usize) -> Result<Vec<f64>, TransformError> {
    let b = basis(n)?;
    assert_eq!(coeffs.len(), n * n);
    // X = C^T * Y * C
    let mut tmp = vec![0.0; n * n];
    for i in 0..n {
        for l in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += b.c[k * n + i] * coeffs[k * n + l];
            }
            tmp[i * n + l] = acc;
        }
    }
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for l in 0..n {
                acc += tmp[i * n + l] * b.c[l * n + j];
            }
            out[i * n + j] = acc;
        }
    }
    Ok(out)
}

/// Mid-tread quantizer: `round_half_away_from_zero(c / qstep)`.
pub fn quantize(coeffs: &[f64], qstep: f64) -> Result<Vec<i32>, TransformError> {
    if qstep <= 0.0 {
        return Err(TransformError::NonPositiveStep);
    }
    Ok(coeffs
        .iter()
        .map(|&c| {
            let t = c / qstep;
            ((t.abs() + 0.5).floor() * t.signum()) as i32
        })
        .collect())
}

/// Reconstruction: `level * qstep`.
pub fn dequantize(levels: &[i32], qstep: f64) -> Result<Vec<f64>, TransformError> {
    if qstep <= 0.0 {
        return Err(TransformError::NonPositiveStep);
    }
    Ok(levels.iter().map(|&l| f64::from(l) * qstep).collect())
}

/// Zig-zag scan order for an `n x n` block: `order[rank] = row * n + col`.
///
/// Diagonals alternate direction starting to the right of the DC position,
/// matching the classic image-coding scan.
pub fn zigzag_order(n: usize) -> Result<&'static [usize], TransformError> {
    static TABLES: OnceLock<Vec<(usize, Vec<usize>)>> = OnceLock::new();
    let tables = TABLES.get_or_init(|| {
        SUPPORTED_SIZES
            .iter()
            .map(|&n| {
                let mut order = Vec::with_capacity(n * n);
                for d in 0..(2 * n - 1) {
                    let lo = d.saturating_sub(n - 1);
                    let hi = d.min(n - 1);
                    if d % 2 == 1 {
                        for r in lo..=hi {
                            order.push(r * n + (d - r));
                        }
                    } else {
                        for r in (lo..=hi).rev() {
                            order.push(r * n + (d - r));
                        }
                    }
                }
                (n, order)
            })
            .collect()
    });
    tables
        .iter()
        .find(|(size, _)| *size == n)
        .map(|(_, order)| order.as_slice())
        .ok_or(TransformError::UnsupportedSize(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct O(N^4) double-sum definition of the orthonormal DCT-II.
    fn dct_oracle(block: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n * n];
        let scale = |k: usize| {
            if k == 0 {
                (1.0 / n as f64).sqrt()
            } else {
                (2.0 / n as f64).sqrt()
            }
        };
        for k in 0..n {
            for l in 0..n {
                let mut acc = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        acc += block[i * n + j]
                            * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64
                                / (2 * n) as f64)
                                .cos()
                            * (std::f64::consts::PI * (2 * j + 1) as f64 * l as f64
                                / (2 * n) as f64)
                                .cos();
                    }
                }
                out[k * n + l] = acc * scale(k) * scale(l);
            }
        }
        out
    }

    #[test]
    fn zero_block_transforms_to_zero() {
        let z = vec![0.0; 64];
        assert!(forward_dct2d(&z, 8).unwrap().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn constant_block_concentrates_in_dc() {
        for &n in &SUPPORTED_SIZES {
            let v = 7.25;
            let block = vec![v; n * n];
            let coeffs = forward_dct2d(&block, n).unwrap();
            assert!((coeffs[0] - n as f64 * v).abs() < 1e-9, "n={n}");
            for (idx, &c) in coeffs.iter().enumerate().skip(1) {
                assert!(c.abs() < 1e-9, "n={n} idx={idx}");
            }
        }
    }

    #[test]
    fn matches_direct_double_sum_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &n in &SUPPORTED_SIZES {
            let block: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-255.0..255.0)).collect();
            let fast = forward_dct2d(&block, n).unwrap();
            let slow = dct_oracle(&block, n);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-9, "n={n}");
            }
        }
    }

    #[test]
    fn perfect_reconstruction_and_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &n in &SUPPORTED_SIZES {
            for _ in 0..20 {
                let block: Vec<f64> =
                    (0..n * n).map(|_| rng.gen_range(-255.0..255.0)).collect();
                let coeffs = forward_dct2d(&block, n).unwrap();
                let back = inverse_dct2d(&coeffs, n).unwrap();
                for (a, b) in block.iter().zip(&back) {
                    assert!((a - b).abs() < 1e-9);
                }
                let e_pixel: f64 = block.iter().map(|v| v * v).sum();
                let e_coeff: f64 = coeffs.iter().map(|v| v * v).sum();
                assert!((e_pixel - e_coeff).abs() <= 1e-6 * e_pixel.max(1.0));
            }
        }
    }

    #[test]
    fn unsupported_size_is_rejected() {
        assert!(matches!(
            forward_dct2d(&vec![0.0; 9], 3),
            Err(TransformError::UnsupportedSize(3))
        ));
        assert!(zigzag_order(5).is_err());
    }

    #[test]
    fn quantizer_rounds_half_away_from_zero() {
        assert_eq!(quantize(&[0.0], 3.0).unwrap(), vec![0]);
        assert_eq!(quantize(&[2.4, 2.5, -2.5, -2.4], 1.0).unwrap(), vec![2, 3, -3, -2]);
        // c = 10, qstep = 8 -> level 1 -> reconstruction 8.
        let levels = quantize(&[10.0], 8.0).unwrap();
        assert_eq!(levels, vec![1]);
        assert_eq!(dequantize(&levels, 8.0).unwrap(), vec![8.0]);
        assert!(quantize(&[1.0], 0.0).is_err());
        assert!(dequantize(&[1], -1.0).is_err());
    }

    #[test]
    fn zigzag_is_a_permutation_with_classic_start() {
        for &n in &SUPPORTED_SIZES {
            let order = zigzag_order(n).unwrap();
            let mut seen = vec![false; n * n];
            for &p in order {
                assert!(!seen[p]);
                seen[p] = true;
            }
            assert!(seen.iter().all(|&s| s));
        }
        let z4 = zigzag_order(4).unwrap();
        let expected: Vec<usize> = [
            (0, 0), (0, 1), (1, 0), (2, 0), (1, 1), (0, 2), (0, 3), (1, 2),
            (2, 1), (3, 0), (3, 1), (2, 2), (1, 3), (2, 3), (3, 2), (3, 3),
        ]
        .iter()
        .map(|&(r, c)| r * 4 + c)
        .collect();
        assert_eq!(z4, expected.as_slice());
    }
}

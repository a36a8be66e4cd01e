//! Intra prediction and (half-pel) motion-compensated prediction.

use super::MotionVector;

/// Read-only view of one plane.
#[derive(Clone, Copy)]
pub struct PlaneRef<'a> {
    pub data: &'a [u8],
    pub width: usize,
    pub height: usize,
}

impl<'a> PlaneRef<'a> {
    pub fn new(data: &'a [u8], width: usize, height: usize) -> Self {
        debug_assert_eq!(data.len(), width * height);
        PlaneRef { data, width, height }
    }

    /// Sample with edge clamping.
    #[inline]
    pub fn get_clamped(&self, x: i64, y: i64) -> u8 {
        let cx = x.clamp(0, self.width as i64 - 1) as usize;
        let cy = y.clamp(0, self.height as i64 - 1) as usize;
        self.data[cy * self.width + cx]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IntraMode {
    /// Mean of the available top and left reconstructed neighbors.
    Dc,
    /// Each row replicates the left neighbor.
    Horizontal,
    /// Each column replicates the top neighbor.
    Vertical,
}

const UNAVAILABLE: u16 = 128;

/// Intra prediction of an `n x n` block at `(x0, y0)` from reconstructed
/// neighbors. Neighbors outside the frame are substituted by mid-gray.
pub fn intra_predict(plane: &PlaneRef, x0: usize, y0: usize, n: usize, mode: IntraMode) -> Vec<u8> {
    let mut out = vec![0u8; n * n];
    match mode {
        IntraMode::Dc => {
            let top = y0 > 0;
            let left = x0 > 0;
            let dc = if top && left {
                let mut sum = 0u32;
                for j in 0..n {
                    sum += u32::from(plane.get(x0 + j, y0 - 1));
                }
                for i in 0..n {
                    sum += u32::from(plane.get(x0 - 1, y0 + i));
                }
                ((sum + n as u32) / (2 * n as u32)) as u8
            } else if top {
                let mut sum = 0u32;
                for j in 0..n {
                    sum += u32::from(plane.get(x0 + j, y0 - 1));
                }
                ((sum + n as u32 / 2) / n as u32) as u8
            } else if left {
                let mut sum = 0u32;
                for i in 0..n {
                    sum += u32::from(plane.get(x0 - 1, y0 + i));
                }
                ((sum + n as u32 / 2) / n as u32) as u8
            } else {
                UNAVAILABLE as u8
            };
            out.fill(dc);
        }
        IntraMode::Horizontal => {
            for i in 0..n {
                let v = if x0 > 0 {
                    plane.get(x0 - 1, y0 + i)
                } else {
                    UNAVAILABLE as u8
                };
                out[i * n..(i + 1) * n].fill(v);
            }
        }
        IntraMode::Vertical => {
            for j in 0..n {
                let v = if y0 > 0 {
                    plane.get(x0 + j, y0 - 1)
                } else {
                    UNAVAILABLE as u8
                };
                for i in 0..n {
                    out[i * n + j] = v;
                }
            }
        }
    }
    out
}

/// Motion-compensated prediction of a `bw x bh` block at `(x0, y0)` with a
/// half-pel motion vector. Integer positions copy samples; half positions
/// use 2-tap bilinear averaging with round-half-up (4 taps on the
/// diagonal). Out-of-bounds reads clamp to the edge.
pub fn half_pel_predict(
    reference: &PlaneRef,
    x0: usize,
    y0: usize,
    bw: usize,
    bh: usize,
    mv: MotionVector,
) -> Vec<u8> {
    let mut out = vec![0u8; bw * bh];
    let fx = (mv.x & 1) as u32;
    let fy = (mv.y & 1) as u32;
    for i in 0..bh {
        let sy = 2 * (y0 + i) as i64 + i64::from(mv.y);
        let ylo = sy >> 1;
        for j in 0..bw {
            let sx = 2 * (x0 + j) as i64 + i64::from(mv.x);
            let xlo = sx >> 1;
            let v = match (fx, fy) {
                (0, 0) => u32::from(reference.get_clamped(xlo, ylo)),
                (1, 0) => {
                    let a = u32::from(reference.get_clamped(xlo, ylo));
                    let b = u32::from(reference.get_clamped(xlo + 1, ylo));
                    (a + b + 1) >> 1
                }
                (0, 1) => {
                    let a = u32::from(reference.get_clamped(xlo, ylo));
                    let c = u32::from(reference.get_clamped(xlo, ylo + 1));
                    (a + c + 1) >> 1
                }
                _ => {
                    let a = u32::from(reference.get_clamped(xlo, ylo));
                    let b = u32::from(reference.get_clamped(xlo + 1, ylo));
                    let c = u32::from(reference.get_clamped(xlo, ylo + 1));
                    let d = u32::from(reference.get_clamped(xlo + 1, ylo + 1));
                    (a + b + c + d + 2) >> 2
                }
            };
            out[i * bw + j] = v as u8;
        }
    }
    out
}

/// Chroma motion vector derived from the luma vector (half resolution,
/// floor division keeps both sides of the codec in agreement).
pub fn chroma_mv(mv: MotionVector) -> MotionVector {
    MotionVector {
        x: mv.x >> 1,
        y: mv.y >> 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane_2x1() -> Vec<u8> {
        vec![10, 20]
    }

    #[test]
    fn zero_mv_copies_colocated_samples() {
        let data = plane_2x1();
        let p = PlaneRef::new(&data, 2, 1);
        let out = half_pel_predict(&p, 0, 0, 2, 1, MotionVector::ZERO);
        assert_eq!(out, vec![10, 20]);
        assert!(!MotionVector::ZERO.is_fracpel());
    }

    #[test]
    fn horizontal_half_pel_averages_with_round_half_up() {
        let data = plane_2x1();
        let p = PlaneRef::new(&data, 2, 1);
        let mv = MotionVector { x: 1, y: 0 };
        let out = half_pel_predict(&p, 0, 0, 1, 1, mv);
        assert_eq!(out, vec![15]);
        assert!(mv.is_fracpel());
        // (20 + 20 + 1) / 2 clamps to the right edge.
        let out = half_pel_predict(&p, 1, 0, 1, 1, mv);
        assert_eq!(out, vec![20]);
    }

    #[test]
    fn even_mv_is_an_integer_shift() {
        let data: Vec<u8> = (0..16).collect();
        let p = PlaneRef::new(&data, 4, 4);
        let mv = MotionVector { x: 2, y: 2 };
        let out = half_pel_predict(&p, 0, 0, 2, 2, mv);
        assert_eq!(out, vec![5, 6, 9, 10]);
        assert!(!mv.is_fracpel());
    }

    #[test]
    fn diagonal_half_pel_uses_four_taps() {
        let data = vec![0, 10, 20, 30];
        let p = PlaneRef::new(&data, 2, 2);
        let mv = MotionVector { x: 1, y: 1 };
        let out = half_pel_predict(&p, 0, 0, 1, 1, mv);
        assert_eq!(out, vec![(0 + 10 + 20 + 30 + 2) / 4]);
    }

    #[test]
    fn negative_mv_clamps_to_edges() {
        let data: Vec<u8> = (10..26).collect();
        let p = PlaneRef::new(&data, 4, 4);
        let mv = MotionVector { x: -6, y: -6 };
        let out = half_pel_predict(&p, 0, 0, 2, 2, mv);
        assert_eq!(out, vec![10, 10, 10, 10]);
    }

    #[test]
    fn intra_dc_averages_available_neighbors() {
        // 4x4 plane; predict the bottom-right 2x2 block.
        let data: Vec<u8> = vec![
            1, 2, 3, 4, //
            5, 6, 10, 20, //
            7, 30, 0, 0, //
            8, 40, 0, 0,
        ];
        let p = PlaneRef::new(&data, 4, 4);
        let out = intra_predict(&p, 2, 2, 2, IntraMode::Dc);
        // top = {10, 20}, left = {30, 40} -> (100 + 2) / 4 = 25
        assert_eq!(out, vec![25; 4]);
        // No neighbors at the frame corner.
        let out = intra_predict(&p, 0, 0, 2, IntraMode::Dc);
        assert_eq!(out, vec![128; 4]);
    }

    #[test]
    fn intra_h_and_v_replicate_neighbors() {
        let data: Vec<u8> = vec![
            1, 2, 3, 4, //
            5, 0, 0, 0, //
            6, 0, 0, 0, //
            7, 0, 0, 0,
        ];
        let p = PlaneRef::new(&data, 4, 4);
        let h = intra_predict(&p, 1, 1, 2, IntraMode::Horizontal);
        assert_eq!(h, vec![5, 5, 6, 6]);
        let v = intra_predict(&p, 1, 1, 2, IntraMode::Vertical);
        assert_eq!(v, vec![2, 3, 2, 3]);
        // Frame edges fall back to mid-gray.
        let h_edge = intra_predict(&p, 0, 1, 2, IntraMode::Horizontal);
        assert_eq!(h_edge, vec![128; 4]);
        let v_edge = intra_predict(&p, 1, 0, 2, IntraMode::Vertical);
        assert_eq!(v_edge, vec![128; 4]);
    }

    #[test]
    fn chroma_mv_halves_toward_negative_infinity() {
        assert_eq!(chroma_mv(MotionVector { x: 4, y: -4 }), MotionVector { x: 2, y: -2 });
        assert_eq!(chroma_mv(MotionVector { x: 3, y: -3 }), MotionVector { x: 1, y: -2 });
    }
}

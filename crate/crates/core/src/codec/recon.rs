//! Shared pixel reconstruction. Encoder mode evaluation and the decoder
//! both render leaves through this path, which is what makes the
//! encoder's internal reference and the standalone decoder bit-exact.

use super::predict::{chroma_mv, half_pel_predict, intra_predict, PlaneRef};
use super::{LeafSyntax, Mode};
use crate::frame::Frame;
use crate::transform::{dequantize, inverse_dct2d, zigzag_order};

/// Rendered pixels of one leaf: an `n x n` luma patch and two `n/2`
/// chroma patches.
#[derive(Clone, Debug)]
pub struct LeafPixels {
    pub y: Vec<u8>,
    pub u: Vec<u8>,
    pub v: Vec<u8>,
}

fn plane_of(frame: &Frame, idx: usize) -> PlaneRef<'_> {
    match idx {
        0 => PlaneRef::new(&frame.y, frame.width, frame.height),
        1 => PlaneRef::new(&frame.u, frame.chroma_width(), frame.chroma_height()),
        _ => PlaneRef::new(&frame.v, frame.chroma_width(), frame.chroma_height()),
    }
}

/// Prediction of one leaf's plane `idx` (0 = Y, 1 = U, 2 = V) at luma
/// position `(x0, y0)` and luma size `size`.
pub fn predict_plane(
    recon: &Frame,
    prev: Option<&Frame>,
    x0: usize,
    y0: usize,
    size: usize,
    idx: usize,
    leaf: &LeafSyntax,
) -> Vec<u8> {
    let (bx, by, n) = if idx == 0 {
        (x0, y0, size)
    } else {
        (x0 / 2, y0 / 2, size / 2)
    };
    match leaf.mode {
        Mode::Skip | Mode::Inter => {
            let reference = plane_of(prev.expect("inter prediction needs a reference"), idx);
            let mv = if leaf.mode == Mode::Skip {
                super::MotionVector::ZERO
            } else if idx == 0 {
                leaf.mv
            } else {
                chroma_mv(leaf.mv)
            };
            half_pel_predict(&reference, bx, by, n, n, mv)
        }
        _ => {
            let kind = leaf.mode.intra_kind().expect("intra mode");
            intra_predict(&plane_of(recon, idx), bx, by, n, kind)
        }
    }
}

/// Adds the dequantized inverse-transformed residual of `leaf` onto the
/// plane predictions, clamping to 8 bits.
pub fn apply_residual(
    preds: &[Vec<u8>; 3],
    leaf: &LeafSyntax,
    qstep: f64,
    size: usize,
) -> LeafPixels {
    let mut planes: [Vec<u8>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for idx in 0..3 {
        let n = if idx == 0 { size } else { size / 2 };
        let mut pixels = preds[idx].clone();
        if leaf.cbf && !leaf.coeffs[idx].is_empty() {
            let order = zigzag_order(n).expect("supported block size");
            let mut levels = vec![0i32; n * n];
            for &(rank, level) in &leaf.coeffs[idx] {
                levels[order[rank as usize]] = level;
            }
            let coeffs = dequantize(&levels, qstep).expect("positive qstep");
            let residual = inverse_dct2d(&coeffs, n).expect("supported block size");
            for (px, res) in pixels.iter_mut().zip(&residual) {
                let v = f64::from(*px) + res.round();
                *px = v.clamp(0.0, 255.0) as u8;
            }
        }
        planes[idx] = pixels;
    }
    let [y, u, v] = planes;
    LeafPixels { y, u, v }
}

/// Renders the reconstruction of one leaf: prediction plus the dequantized
/// inverse-transformed residual, clamped to 8 bits.
pub fn render_leaf(
    recon: &Frame,
    prev: Option<&Frame>,
    x0: usize,
    y0: usize,
    size: usize,
    leaf: &LeafSyntax,
    qstep: f64,
) -> LeafPixels {
    let preds: [Vec<u8>; 3] =
        std::array::from_fn(|idx| predict_plane(recon, prev, x0, y0, size, idx, leaf));
    apply_residual(&preds, leaf, qstep, size)
}

/// Writes rendered leaf pixels into the reconstruction frame.
pub fn blit_leaf(recon: &mut Frame, x0: usize, y0: usize, size: usize, pixels: &LeafPixels) {
    let w = recon.width;
    for row in 0..size {
        recon.y[(y0 + row) * w + x0..(y0 + row) * w + x0 + size]
            .copy_from_slice(&pixels.y[row * size..(row + 1) * size]);
    }
    let (cw, n) = (recon.chroma_width(), size / 2);
    let (cx, cy) = (x0 / 2, y0 / 2);
    for row in 0..n {
        recon.u[(cy + row) * cw + cx..(cy + row) * cw + cx + n]
            .copy_from_slice(&pixels.u[row * n..(row + 1) * n]);
        recon.v[(cy + row) * cw + cx..(cy + row) * cw + cx + n]
            .copy_from_slice(&pixels.v[row * n..(row + 1) * n]);
    }
}

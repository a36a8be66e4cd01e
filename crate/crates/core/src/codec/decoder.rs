//! The standalone decoder: parses the payload, reconstructs through the
//! shared leaf renderer, and tallies bit-stream features as it goes.

use super::recon::{blit_leaf, render_leaf};
use super::syntax::{read_leaf, tally_leaf};
use super::{Bitstream, CodecError};
use crate::bits::BitReader;
use crate::energy::{Feature, FeatureCounts};
use crate::frame::Frame;
use crate::lagrange::qp_to_qstep;

/// Decodes a conforming bitstream into padded frames plus the feature
/// tallies of everything the decoder did.
pub fn decode_sequence(bs: &Bitstream) -> Result<(Vec<Frame>, FeatureCounts), CodecError> {
    let h = &bs.header;
    let (pw, ph) = (h.padded_width(), h.padded_height());
    let mut counts = FeatureCounts::new();
    counts.add(Feature::Offset, 1);

    let mut frames: Vec<Frame> = Vec::with_capacity(usize::from(h.frame_count));
    let mut r = BitReader::new(&bs.payload);
    for fi in 0..h.frame_count {
        let is_intra = r.read_bit()?;
        if !is_intra && frames.is_empty() {
            return Err(CodecError::InvalidSyntax(
                "inter frame without a reference".into(),
            ));
        }
        counts.add(
            if is_intra { Feature::FrameIntra } else { Feature::FrameInter },
            1,
        );
        let mut recon = Frame::new(usize::from(h.width), usize::from(h.height))
            .map_err(|e| CodecError::InvalidHeader(e.to_string()))?;
        let prev = frames.last();
        for ctu_y in (0..ph).step_by(usize::from(h.ctu_size)) {
            for ctu_x in (0..pw).step_by(usize::from(h.ctu_size)) {
                let qp = if h.delta_qp_enabled {
                    let delta = r.read_se()?;
                    if delta.abs() > 5 {
                        return Err(CodecError::InvalidSyntax(format!("qp delta {delta}")));
                    }
                    let qp = i64::from(h.qp_base) + delta;
                    if !(0..=51).contains(&qp) {
                        return Err(CodecError::InvalidSyntax(format!("ctu qp {qp}")));
                    }
                    qp as u8
                } else {
                    h.qp_base
                };
                decode_node(
                    &mut r,
                    &mut recon,
                    prev,
                    &mut counts,
                    ctu_x,
                    ctu_y,
                    usize::from(h.ctu_size),
                    0,
                    qp,
                    is_intra,
                )?;
            }
        }
        r.align()
            .map_err(|_| CodecError::InvalidSyntax(format!("nonzero padding after frame {fi}")))?;
        frames.push(recon);
    }
    if r.bit_pos() != bs.payload.len() as u64 * 8 {
        return Err(CodecError::InvalidSyntax("trailing data after last frame".into()));
    }
    debug_assert!(counts.validate(pw, ph, frames.len()).is_ok());
    Ok((frames, counts))
}

#[allow(clippy::too_many_arguments)]
fn decode_node(
    r: &mut BitReader,
    recon: &mut Frame,
    prev: Option<&Frame>,
    counts: &mut FeatureCounts,
    x0: usize,
    y0: usize,
    size: usize,
    depth: usize,
    qp: u8,
    intra_frame: bool,
) -> Result<(), CodecError> {
    const MAX_SPLIT_DEPTH: usize = 2;
    let split = if depth < MAX_SPLIT_DEPTH {
        r.read_bit()?
    } else {
        false
    };
    if split {
        let half = size / 2;
        for &(cx, cy) in &[
            (x0, y0),
            (x0 + half, y0),
            (x0, y0 + half),
            (x0 + half, y0 + half),
        ] {
            decode_node(r, recon, prev, counts, cx, cy, half, depth + 1, qp, intra_frame)?;
        }
        return Ok(());
    }
    let leaf = read_leaf(r, size, intra_frame)?;
    let qstep = qp_to_qstep(qp)?;
    let pixels = render_leaf(recon, prev, x0, y0, size, &leaf, qstep);
    blit_leaf(recon, x0, y0, size, &pixels);
    tally_leaf(counts, &leaf, depth);
    Ok(())
}

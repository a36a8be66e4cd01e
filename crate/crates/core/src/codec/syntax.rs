//! Leaf-level syntax: serialization, exact bit counting, feature tallying.

use super::{CodecError, LeafSyntax, Mode, MotionVector};
use crate::bits::{se_len, ue_len, BitReader, BitWriter};
use crate::energy::{coeff_val_weight, Feature, FeatureCounts};

/// Exact number of payload bits [`write_leaf`] produces for this leaf.
pub fn leaf_bits(leaf: &LeafSyntax) -> u64 {
    let mut bits = ue_len(leaf.mode.id());
    if leaf.mode == Mode::Inter {
        bits += se_len(i64::from(leaf.mv.x)) + se_len(i64::from(leaf.mv.y));
    }
    bits += 1; // coded-block flag
    if leaf.cbf {
        for block in &leaf.coeffs {
            bits += coeff_block_bits(block);
        }
    }
    bits
}

fn coeff_block_bits(block: &[(u16, i32)]) -> u64 {
    let mut bits = ue_len(block.len() as u64);
    let mut prev: i64 = -1;
    for (i, &(rank, level)) in block.iter().enumerate() {
        let delta = if i == 0 {
            u64::from(rank)
        } else {
            (i64::from(rank) - prev - 1) as u64
        };
        prev = i64::from(rank);
        bits += ue_len(delta) + se_len(i64::from(level));
    }
    bits
}

pub fn write_leaf(w: &mut BitWriter, leaf: &LeafSyntax) {
    w.write_ue(leaf.mode.id());
    if leaf.mode == Mode::Inter {
        w.write_se(i64::from(leaf.mv.x));
        w.write_se(i64::from(leaf.mv.y));
    }
    w.write_bit(leaf.cbf);
    if leaf.cbf {
        for block in &leaf.coeffs {
            w.write_ue(block.len() as u64);
            let mut prev: i64 = -1;
            for (i, &(rank, level)) in block.iter().enumerate() {
                let delta = if i == 0 {
                    u64::from(rank)
                } else {
                    (i64::from(rank) - prev - 1) as u64
                };
                prev = i64::from(rank);
                w.write_ue(delta);
                w.write_se(i64::from(level));
            }
        }
    }
}

/// Parses one leaf for a block of luma size `size` (chroma blocks are half
/// size). `intra_frame` restricts the admissible modes.
pub fn read_leaf(
    r: &mut BitReader,
    size: usize,
    intra_frame: bool,
) -> Result<LeafSyntax, CodecError> {
    let mode_id = r.read_ue()?;
    let mode = Mode::from_id(mode_id)
        .ok_or_else(|| CodecError::InvalidSyntax(format!("mode id {mode_id}")))?;
    if intra_frame && !mode.is_intra() {
        return Err(CodecError::InvalidSyntax(format!(
            "mode {mode:?} in an intra frame"
        )));
    }
    let mv = if mode == Mode::Inter {
        let x = read_mv_component(r)?;
        let y = read_mv_component(r)?;
        MotionVector { x, y }
    } else {
        MotionVector::ZERO
    };
    let cbf = r.read_bit()?;
    let mut coeffs = [Vec::new(), Vec::new(), Vec::new()];
    if cbf {
        for (plane, list) in coeffs.iter_mut().enumerate() {
            let n = if plane == 0 { size } else { size / 2 };
            let cells = (n * n) as u64;
            let count = r.read_ue()?;
            if count > cells {
                return Err(CodecError::InvalidSyntax(format!(
                    "{count} coefficients in a {n}x{n} block"
                )));
            }
            let mut prev: i64 = -1;
            for i in 0..count {
                let delta = r.read_ue()?;
                let rank = if i == 0 {
                    delta as i64
                } else {
                    prev + 1 + delta as i64
                };
                if rank >= cells as i64 {
                    return Err(CodecError::InvalidSyntax(format!(
                        "coefficient rank {rank} in a {n}x{n} block"
                    )));
                }
                prev = rank;
                let level = r.read_se()?;
                if level == 0 {
                    return Err(CodecError::InvalidSyntax("zero coded level".into()));
                }
                if level.abs() > i64::from(i32::MAX) {
                    return Err(CodecError::InvalidSyntax("level out of range".into()));
                }
                list.push((rank as u16, level as i32));
            }
        }
    }
    Ok(LeafSyntax { mode, mv, cbf, coeffs })
}

fn read_mv_component(r: &mut BitReader) -> Result<i32, CodecError> {
    let v = r.read_se()?;
    // Keep half-pel coordinates comfortably inside i64 arithmetic.
    if v.abs() > 1 << 20 {
        return Err(CodecError::InvalidSyntax(format!("motion component {v}")));
    }
    Ok(v as i32)
}

/// Adds the features this leaf exercises in the decoder.
pub fn tally_leaf(counts: &mut FeatureCounts, leaf: &LeafSyntax, depth: usize) {
    counts.add(leaf.mode.block_class().block_feature(depth), 1);
    counts.add(Feature::Fracpel, leaf.fracpel_events());
    if leaf.cbf {
        counts.add(Feature::trans(depth), 1);
        for level in leaf.nonzero_levels() {
            counts.add(Feature::Coeffs, 1);
            counts.add(Feature::Val, coeff_val_weight(level));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round_trip(leaf: &LeafSyntax, size: usize, intra: bool) -> LeafSyntax {
        let mut w = BitWriter::new();
        write_leaf(&mut w, leaf);
        assert_eq!(w.bit_len(), leaf_bits(leaf), "bit accounting");
        let bytes = w.into_bytes();
        let mut r = BitReader::new(&bytes);
        read_leaf(&mut r, size, intra).unwrap()
    }

    #[test]
    fn leaf_round_trip_covers_all_shapes() {
        let skip = LeafSyntax::uncoded(Mode::Skip, MotionVector::ZERO);
        assert_eq!(round_trip(&skip, 16, false), skip);
        assert_eq!(leaf_bits(&skip), 2); // ue(0)=1 bit + cbf

        let inter = LeafSyntax {
            mode: Mode::Inter,
            mv: MotionVector { x: -3, y: 5 },
            cbf: true,
            coeffs: [vec![(0, 4), (2, -1), (9, 1)], vec![], vec![(1, -2)]],
        };
        assert_eq!(round_trip(&inter, 8, false), inter);

        let intra = LeafSyntax {
            mode: Mode::IntraV,
            mv: MotionVector::ZERO,
            cbf: true,
            coeffs: [vec![(15, 1)], vec![(3, 2)], vec![]],
        };
        assert_eq!(round_trip(&intra, 4, true), intra);
    }

    #[test]
    fn invalid_syntax_is_rejected() {
        // Mode id 7 does not exist.
        let mut w = BitWriter::new();
        w.write_ue(7);
        w.write_bit(false);
        let bytes = w.into_bytes();
        assert!(read_leaf(&mut BitReader::new(&bytes), 16, false).is_err());

        // Skip inside an intra frame.
        let mut w = BitWriter::new();
        write_leaf(&mut w, &LeafSyntax::uncoded(Mode::Skip, MotionVector::ZERO));
        let bytes = w.into_bytes();
        assert!(read_leaf(&mut BitReader::new(&bytes), 16, true).is_err());

        // Too many coefficients for a 4x4 block.
        let mut w = BitWriter::new();
        w.write_ue(Mode::IntraDc.id());
        w.write_bit(true);
        w.write_ue(17);
        let bytes = w.into_bytes();
        assert!(read_leaf(&mut BitReader::new(&bytes), 4, true).is_err());

        // Zero level.
        let mut w = BitWriter::new();
        w.write_ue(Mode::IntraDc.id());
        w.write_bit(true);
        w.write_ue(1);
        w.write_ue(0);
        w.write_se(0);
        let bytes = w.into_bytes();
        assert!(read_leaf(&mut BitReader::new(&bytes), 4, true).is_err());
    }

    #[test]
    fn tally_counts_block_trans_and_coeff_features() {
        let mut counts = FeatureCounts::new();
        let leaf = LeafSyntax {
            mode: Mode::Inter,
            mv: MotionVector { x: 1, y: 0 },
            cbf: true,
            coeffs: [vec![(0, 3), (5, -1)], vec![(0, 1)], vec![]],
        };
        tally_leaf(&mut counts, &leaf, 1);
        assert_eq!(counts.get(Feature::InterBlkD1), 1);
        assert_eq!(counts.get(Feature::Fracpel), 1);
        assert_eq!(counts.get(Feature::TransD1), 1);
        assert_eq!(counts.get(Feature::Coeffs), 3);
        // val = (1+1) + (1+0) + (1+0) = 4
        assert_eq!(counts.get(Feature::Val), 4);
    }
}

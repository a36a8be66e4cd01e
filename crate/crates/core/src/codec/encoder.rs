//! The encoder: quadtree mode search driven by precise and rough
//! decoding-energy-rate-distortion costs, optional CTU-level QP search,
//! and exact bit accounting against the entropy writer.

use super::predict::{intra_predict, PlaneRef};
use super::recon::{apply_residual, blit_leaf, predict_plane, LeafPixels};
use super::syntax::{leaf_bits, tally_leaf, write_leaf};
use super::{
    Bitstream, BlockEnergyModel, CodecError, EncoderConfig, Header, LeafSyntax, Mode,
    MotionVector,
};
use crate::bits::{se_len, ue_len, BitWriter};
use crate::energy::{estimate_block_energy, estimate_energy_bf, BlockClass, Feature, FeatureCounts};
use crate::frame::Frame;
use crate::lagrange::{choose_mode, cost_rough, qp_to_qstep, LagrangePair, ModeCandidate};
use crate::transform::{forward_dct2d, quantize, zigzag_order};

/// Number of intra modes kept by the rough preselection stage.
const INTRA_PRESELECT: usize = 3;

/// One chosen leaf, for mode-map comparisons.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LeafRecord {
    pub frame: u16,
    pub x: u16,
    pub y: u16,
    pub size: u8,
    pub depth: u8,
    pub qp: u8,
    pub mode: Mode,
    pub mv: MotionVector,
}

#[derive(Clone, Debug)]
pub struct EncodeStats {
    pub total_bytes: usize,
    /// Payload bits per frame, including the frame-type bit and padding.
    pub frame_bits: Vec<u64>,
    /// Chosen QP per CTU, tallied over the whole sequence.
    pub qp_histogram: [u64; 52],
    /// Features the decoder will tally for this bitstream.
    pub feature_counts: FeatureCounts,
    /// Estimated decoding energy of the whole sequence.
    pub energy_joules: f64,
    /// Sum of the chosen blocks' energy estimates (excludes the sequence
    /// offset and per-frame features).
    pub block_energy_sum: f64,
    pub mode_map: Vec<LeafRecord>,
    /// The encoder's internal reconstruction, frame by frame.
    pub recon: Vec<Frame>,
}

#[derive(Clone, Debug)]
pub struct EncodeOutcome {
    pub bitstream: Bitstream,
    pub stats: EncodeStats,
}

struct Enc<'a> {
    cfg: &'a EncoderConfig,
    model: &'a BlockEnergyModel,
    pair: LagrangePair,
}

impl Enc<'_> {
    /// Precise-level cost of side-information bits (split flags, QP
    /// deltas). Under the rate-proportional model those bits also cost
    /// energy, which keeps the collapse to plain RDO exact.
    fn bit_cost(&self, bits: u64) -> f64 {
        match self.model {
            BlockEnergyModel::FeatureBased(_) => self.pair.lambda_r * bits as f64,
            BlockEnergyModel::RateProportional { joules_per_bit } => {
                (self.pair.lambda_r + joules_per_bit * self.pair.lambda_e) * bits as f64
            }
        }
    }

    fn rough_cost(
        &self,
        sad: f64,
        bits: u64,
        class: BlockClass,
        depth: usize,
        fracpel: bool,
    ) -> f64 {
        match self.model {
            BlockEnergyModel::FeatureBased(energies) => {
                let mut energy = energies.get(class.block_feature(depth));
                if fracpel {
                    energy += energies.get(Feature::Fracpel);
                }
                cost_rough(sad, bits, energy, &self.pair, self.cfg.rough_compensation)
            }
            BlockEnergyModel::RateProportional { joules_per_bit } => {
                sad + (self.pair.lambda_r + joules_per_bit * self.pair.lambda_e).sqrt()
                    * bits as f64
            }
        }
    }

    fn block_energy(&self, syn: &LeafSyntax, depth: usize, bits: u64) -> f64 {
        match self.model {
            BlockEnergyModel::FeatureBased(energies) => {
                let levels: Vec<i32> = syn.nonzero_levels().collect();
                estimate_block_energy(
                    energies,
                    syn.mode.block_class(),
                    depth,
                    syn.cbf,
                    &levels,
                    syn.fracpel_events(),
                )
            }
            BlockEnergyModel::RateProportional { joules_per_bit } => {
                joules_per_bit * bits as f64
            }
        }
    }
}

struct FrameCtx<'a> {
    orig: &'a Frame,
    prev: Option<&'a Frame>,
    is_intra: bool,
}

struct LeafChoice {
    syntax: LeafSyntax,
    cand: ModeCandidate,
    pixels: LeafPixels,
}

enum NodeChoice {
    Leaf(LeafChoice),
    Split(Vec<NodeDecision>),
}

struct NodeDecision {
    /// Precise cost including split-flag bit costs at and below this node.
    cost: f64,
    /// Exact syntax bits at and below this node, including split flags.
    bits: u64,
    choice: NodeChoice,
}

fn sad_block(orig: &PlaneRef, patch: &[u8], x0: usize, y0: usize, n: usize) -> u64 {
    let mut sad = 0u64;
    for i in 0..n {
        let row = &orig.data[(y0 + i) * orig.width + x0..(y0 + i) * orig.width + x0 + n];
        for (a, b) in row.iter().zip(&patch[i * n..(i + 1) * n]) {
            sad += u64::from(a.abs_diff(*b));
        }
    }
    sad
}

fn ssd_block(orig: &PlaneRef, patch: &[u8], x0: usize, y0: usize, n: usize) -> u64 {
    let mut ssd = 0u64;
    for i in 0..n {
        let row = &orig.data[(y0 + i) * orig.width + x0..(y0 + i) * orig.width + x0 + n];
        for (a, b) in row.iter().zip(&patch[i * n..(i + 1) * n]) {
            let d = i64::from(*a) - i64::from(*b);
            ssd += (d * d) as u64;
        }
    }
    ssd
}

fn luma_plane(frame: &Frame) -> PlaneRef<'_> {
    PlaneRef::new(&frame.y, frame.width, frame.height)
}

fn chroma_plane(frame: &Frame, idx: usize) -> PlaneRef<'_> {
    let data = if idx == 1 { &frame.u } else { &frame.v };
    PlaneRef::new(data, frame.chroma_width(), frame.chroma_height())
}

/// Distortion of a rendered leaf: SSD over Y, U, and V.
fn leaf_distortion(orig: &Frame, pixels: &LeafPixels, x0: usize, y0: usize, size: usize) -> f64 {
    let mut ssd = ssd_block(&luma_plane(orig), &pixels.y, x0, y0, size);
    let n = size / 2;
    ssd += ssd_block(&chroma_plane(orig, 1), &pixels.u, x0 / 2, y0 / 2, n);
    ssd += ssd_block(&chroma_plane(orig, 2), &pixels.v, x0 / 2, y0 / 2, n);
    ssd as f64
}

/// Integer-pel SAD with edge clamping, allocation-free for the full search.
fn sad_int_pel(
    orig: &PlaneRef,
    reference: &PlaneRef,
    x0: usize,
    y0: usize,
    n: usize,
    dx: i64,
    dy: i64,
) -> u64 {
    let mut sad = 0u64;
    for i in 0..n {
        let sy = y0 as i64 + i as i64 + dy;
        for j in 0..n {
            let sx = x0 as i64 + j as i64 + dx;
            let a = orig.get(x0 + j, y0 + i);
            let b = reference.get_clamped(sx, sy);
            sad += u64::from(a.abs_diff(b));
        }
    }
    sad
}

struct SearchBest {
    cost: f64,
    mv: MotionVector,
}

impl SearchBest {
    fn consider(&mut self, cost: f64, mv: MotionVector) {
        let key = |m: &MotionVector| {
            (
                i64::from(m.x) * i64::from(m.x) + i64::from(m.y) * i64::from(m.y),
                m.y,
                m.x,
            )
        };
        if cost < self.cost || (cost == self.cost && key(&mv) < key(&self.mv)) {
            self.cost = cost;
            self.mv = mv;
        }
    }
}

/// Full search over integer offsets, then an 8-neighbor half-pel
/// refinement, each position scored with the rough cost.
fn motion_search(
    enc: &Enc,
    fc: &FrameCtx,
    x0: usize,
    y0: usize,
    size: usize,
    depth: usize,
) -> MotionVector {
    let orig = luma_plane(fc.orig);
    let prev = fc.prev.expect("motion search needs a reference frame");
    let reference = luma_plane(prev);
    let mode_bits = ue_len(Mode::Inter.id());
    let range = i64::from(enc.cfg.motion_search_range);

    let mut best = SearchBest {
        cost: f64::INFINITY,
        mv: MotionVector::ZERO,
    };
    for dy in -range..=range {
        for dx in -range..=range {
            let sad = sad_int_pel(&orig, &reference, x0, y0, size, dx, dy) as f64;
            let mv = MotionVector {
                x: (2 * dx) as i32,
                y: (2 * dy) as i32,
            };
            let bits = mode_bits + se_len(i64::from(mv.x)) + se_len(i64::from(mv.y));
            let cost = enc.rough_cost(sad, bits, BlockClass::Inter, depth, false);
            best.consider(cost, mv);
        }
    }
    let center = best.mv;
    for hy in -1i32..=1 {
        for hx in -1i32..=1 {
            if hx == 0 && hy == 0 {
                continue;
            }
            let mv = MotionVector {
                x: center.x + hx,
                y: center.y + hy,
            };
            let pred = super::predict::half_pel_predict(&reference, x0, y0, size, size, mv);
            let sad = sad_block(&orig, &pred, x0, y0, size) as f64;
            let bits = mode_bits + se_len(i64::from(mv.x)) + se_len(i64::from(mv.y));
            let cost = enc.rough_cost(sad, bits, BlockClass::Inter, depth, mv.is_fracpel());
            best.consider(cost, mv);
        }
    }
    best.mv
}

/// Rough-cost ranking of the intra modes; keeps the best
/// [`INTRA_PRESELECT`] for precise evaluation.
fn preselect_intra(
    enc: &Enc,
    fc: &FrameCtx,
    recon: &Frame,
    x0: usize,
    y0: usize,
    size: usize,
    depth: usize,
) -> Vec<Mode> {
    let orig = luma_plane(fc.orig);
    let recon_luma = luma_plane(recon);
    let mut scored: Vec<(f64, Mode)> = [Mode::IntraDc, Mode::IntraH, Mode::IntraV]
        .iter()
        .map(|&mode| {
            let pred = intra_predict(&recon_luma, x0, y0, size, mode.intra_kind().unwrap());
            let sad = sad_block(&orig, &pred, x0, y0, size) as f64;
            let cost = enc.rough_cost(sad, ue_len(mode.id()), BlockClass::Intra, depth, false);
            (cost, mode)
        })
        .collect();
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    scored.truncate(INTRA_PRESELECT);
    scored.into_iter().map(|(_, m)| m).collect()
}

/// Runs the residual pipeline for one mode and returns the syntax plus
/// the plane predictions (reused for the rendered reconstruction).
fn coded_syntax(
    fc: &FrameCtx,
    recon: &Frame,
    x0: usize,
    y0: usize,
    size: usize,
    qstep: f64,
    mode: Mode,
    mv: MotionVector,
) -> (LeafSyntax, [Vec<u8>; 3]) {
    let probe = LeafSyntax::uncoded(mode, mv);
    let preds: [Vec<u8>; 3] = std::array::from_fn(|idx| {
        predict_plane(recon, fc.prev, x0, y0, size, idx, &probe)
    });
    let mut coeffs: [Vec<(u16, i32)>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for idx in 0..3 {
        let n = if idx == 0 { size } else { size / 2 };
        let orig = if idx == 0 {
            luma_plane(fc.orig)
        } else {
            chroma_plane(fc.orig, idx)
        };
        let (bx, by) = if idx == 0 { (x0, y0) } else { (x0 / 2, y0 / 2) };
        let mut residual = vec![0.0f64; n * n];
        for i in 0..n {
            for j in 0..n {
                residual[i * n + j] = f64::from(orig.get(bx + j, by + i))
                    - f64::from(preds[idx][i * n + j]);
            }
        }
        let freq = forward_dct2d(&residual, n).expect("supported size");
        let levels = quantize(&freq, qstep).expect("positive qstep");
        let order = zigzag_order(n).expect("supported size");
        for (rank, &pos) in order.iter().enumerate() {
            if levels[pos] != 0 {
                coeffs[idx].push((rank as u16, levels[pos]));
            }
        }
    }
    let cbf = coeffs.iter().any(|c| !c.is_empty());
    let syn = LeafSyntax {
        mode,
        mv,
        cbf,
        coeffs: if cbf {
            coeffs
        } else {
            [Vec::new(), Vec::new(), Vec::new()]
        },
    };
    (syn, preds)
}

fn eval_leaf(
    enc: &Enc,
    fc: &FrameCtx,
    recon: &Frame,
    x0: usize,
    y0: usize,
    size: usize,
    depth: usize,
    qp: u8,
) -> LeafChoice {
    let qstep = qp_to_qstep(qp).expect("validated qp");
    let mut syntaxes: Vec<LeafSyntax> = Vec::with_capacity(8);
    let mut cands: Vec<ModeCandidate> = Vec::with_capacity(8);
    let mut pixels: Vec<LeafPixels> = Vec::with_capacity(8);

    let mut push = |syn: LeafSyntax, pix: LeafPixels| {
        let bits = leaf_bits(&syn);
        let distortion = leaf_distortion(fc.orig, &pix, x0, y0, size);
        let block_energy = enc.block_energy(&syn, depth, bits);
        cands.push(ModeCandidate {
            mode: syn.mode,
            mv: syn.mv,
            distortion,
            bits,
            block_energy,
        });
        syntaxes.push(syn);
        pixels.push(pix);
    };

    if !fc.is_intra {
        // SKIP: co-located copy, no residual.
        let syn = LeafSyntax::uncoded(Mode::Skip, MotionVector::ZERO);
        let probe = syn.clone();
        let preds: [Vec<u8>; 3] = std::array::from_fn(|idx| {
            predict_plane(recon, fc.prev, x0, y0, size, idx, &probe)
        });
        let [py, pu, pv] = preds;
        push(syn, LeafPixels { y: py, u: pu, v: pv });

        // INTER at the searched motion vector, coded and uncoded.
        let mv = motion_search(enc, fc, x0, y0, size, depth);
        let (syn, preds) = coded_syntax(fc, recon, x0, y0, size, qstep, Mode::Inter, mv);
        if syn.cbf {
            let coded = apply_residual(&preds, &syn, qstep, size);
            let uncoded_syn = LeafSyntax::uncoded(Mode::Inter, mv);
            push(syn, coded);
            let [py, pu, pv] = preds;
            push(uncoded_syn, LeafPixels { y: py, u: pu, v: pv });
        } else {
            let [py, pu, pv] = preds;
            push(syn, LeafPixels { y: py, u: pu, v: pv });
        }
    }

    for mode in preselect_intra(enc, fc, recon, x0, y0, size, depth) {
        let (syn, preds) = coded_syntax(fc, recon, x0, y0, size, qstep, mode, MotionVector::ZERO);
        if syn.cbf {
            let coded = apply_residual(&preds, &syn, qstep, size);
            let uncoded_syn = LeafSyntax::uncoded(mode, MotionVector::ZERO);
            push(syn, coded);
            let [py, pu, pv] = preds;
            push(uncoded_syn, LeafPixels { y: py, u: pu, v: pv });
        } else {
            let [py, pu, pv] = preds;
            push(syn, LeafPixels { y: py, u: pu, v: pv });
        }
    }

    let idx = choose_mode(&cands, &enc.pair).expect("non-empty candidate list");
    LeafChoice {
        syntax: syntaxes.swap_remove(idx),
        cand: cands.swap_remove(idx),
        pixels: pixels.swap_remove(idx),
    }
}

/// Recursive quadtree decision. Writes the winning reconstruction into
/// `recon` so later siblings predict from decided pixels.
fn evaluate_node(
    enc: &Enc,
    fc: &FrameCtx,
    recon: &mut Frame,
    x0: usize,
    y0: usize,
    size: usize,
    depth: usize,
    qp: u8,
) -> NodeDecision {
    let leaf = eval_leaf(enc, fc, recon, x0, y0, size, depth, qp);
    let has_flag = depth < enc.cfg.max_split_depth;
    let flag_bits = u64::from(has_flag);
    let leaf_cost = leaf.cand.cost(&enc.pair) + enc.bit_cost(flag_bits);
    let leaf_total_bits = leaf.cand.bits + flag_bits;
    if !has_flag {
        blit_leaf(recon, x0, y0, size, &leaf.pixels);
        return NodeDecision {
            cost: leaf_cost,
            bits: leaf_total_bits,
            choice: NodeChoice::Leaf(leaf),
        };
    }

    let half = size / 2;
    let children: Vec<NodeDecision> = [
        (x0, y0),
        (x0 + half, y0),
        (x0, y0 + half),
        (x0 + half, y0 + half),
    ]
    .iter()
    .map(|&(cx, cy)| evaluate_node(enc, fc, recon, cx, cy, half, depth + 1, qp))
    .collect();
    let split_cost = enc.bit_cost(1) + children.iter().map(|c| c.cost).sum::<f64>();
    let split_bits = 1 + children.iter().map(|c| c.bits).sum::<u64>();

    // Ties go to the unsplit leaf.
    if leaf_cost <= split_cost {
        blit_leaf(recon, x0, y0, size, &leaf.pixels);
        NodeDecision {
            cost: leaf_cost,
            bits: leaf_total_bits,
            choice: NodeChoice::Leaf(leaf),
        }
    } else {
        NodeDecision {
            cost: split_cost,
            bits: split_bits,
            choice: NodeChoice::Split(children),
        }
    }
}

fn apply_decision(recon: &mut Frame, x0: usize, y0: usize, size: usize, d: &NodeDecision) {
    match &d.choice {
        NodeChoice::Leaf(leaf) => blit_leaf(recon, x0, y0, size, &leaf.pixels),
        NodeChoice::Split(children) => {
            let half = size / 2;
            let quads = [
                (x0, y0),
                (x0 + half, y0),
                (x0, y0 + half),
                (x0 + half, y0 + half),
            ];
            for (child, &(cx, cy)) in children.iter().zip(&quads) {
                apply_decision(recon, cx, cy, half, child);
            }
        }
    }
}

fn write_node(w: &mut BitWriter, d: &NodeDecision, depth: usize, max_depth: usize) {
    let is_split = matches!(d.choice, NodeChoice::Split(_));
    if depth < max_depth {
        w.write_bit(is_split);
    }
    match &d.choice {
        NodeChoice::Leaf(leaf) => write_leaf(w, &leaf.syntax),
        NodeChoice::Split(children) => {
            for child in children {
                write_node(w, child, depth + 1, max_depth);
            }
        }
    }
}

struct CtuCommit<'a> {
    counts: &'a mut FeatureCounts,
    mode_map: &'a mut Vec<LeafRecord>,
    block_energy_sum: &'a mut f64,
    frame: u16,
    qp: u8,
}

fn commit_node(ctx: &mut CtuCommit, x0: usize, y0: usize, size: usize, depth: usize, d: &NodeDecision) {
    match &d.choice {
        NodeChoice::Leaf(leaf) => {
            tally_leaf(ctx.counts, &leaf.syntax, depth);
            *ctx.block_energy_sum += leaf.cand.block_energy;
            ctx.mode_map.push(LeafRecord {
                frame: ctx.frame,
                x: x0 as u16,
                y: y0 as u16,
                size: size as u8,
                depth: depth as u8,
                qp: ctx.qp,
                mode: leaf.syntax.mode,
                mv: leaf.syntax.mv,
            });
        }
        NodeChoice::Split(children) => {
            let half = size / 2;
            let quads = [
                (x0, y0),
                (x0 + half, y0),
                (x0, y0 + half),
                (x0 + half, y0 + half),
            ];
            for (child, &(cx, cy)) in children.iter().zip(&quads) {
                commit_node(ctx, cx, cy, half, depth + 1, child);
            }
        }
    }
}

/// Encodes a sequence with the given lambda pair.
///
/// When `cfg.delta_qp_range > 0` every CTU is evaluated at every QP in
/// `[qp_base - range, qp_base + range]` (lambdas held fixed) and the
/// cheapest wins; chosen QPs land in the histogram. The reported feature
/// counts equal what [`super::decode_sequence`] tallies on the output.
pub fn encode_sequence(
    frames: &[Frame],
    cfg: &EncoderConfig,
    model: &BlockEnergyModel,
    pair: &LagrangePair,
) -> Result<EncodeOutcome, CodecError> {
    cfg.validate()?;
    if frames.is_empty() {
        return Err(CodecError::EmptyInput);
    }
    let first = &frames[0];
    if frames.iter().any(|f| {
        f.width != first.width
            || f.height != first.height
            || f.crop_width != first.crop_width
            || f.crop_height != first.crop_height
    }) {
        return Err(CodecError::DimensionMismatch);
    }
    if first.crop_width > u16::MAX as usize
        || first.crop_height > u16::MAX as usize
        || frames.len() > u16::MAX as usize
    {
        return Err(CodecError::Config("sequence exceeds header field ranges".into()));
    }

    let header = Header {
        width: first.crop_width as u16,
        height: first.crop_height as u16,
        frame_count: frames.len() as u16,
        ctu_size: cfg.ctu_size as u8,
        qp_base: cfg.qp_base,
        intra_period: cfg.intra_period,
        delta_qp_enabled: cfg.delta_qp_range > 0,
    };
    debug_assert_eq!(header.padded_width(), first.width);
    debug_assert_eq!(header.padded_height(), first.height);

    let enc = Enc {
        cfg,
        model,
        pair: *pair,
    };
    let qp_options: Vec<u8> = {
        let lo = cfg.qp_base - cfg.delta_qp_range;
        let hi = cfg.qp_base + cfg.delta_qp_range;
        (lo..=hi).collect()
    };

    let mut counts = FeatureCounts::new();
    counts.add(Feature::Offset, 1);
    let mut stats = EncodeStats {
        total_bytes: 0,
        frame_bits: Vec::with_capacity(frames.len()),
        qp_histogram: [0; 52],
        feature_counts: FeatureCounts::new(),
        energy_joules: 0.0,
        block_energy_sum: 0.0,
        mode_map: Vec::new(),
        recon: Vec::with_capacity(frames.len()),
    };

    let mut w = BitWriter::new();
    let mut prev_frame: Option<Frame> = None;
    for (fi, orig) in frames.iter().enumerate() {
        let is_intra = fi % usize::from(cfg.intra_period) == 0;
        counts.add(
            if is_intra { Feature::FrameIntra } else { Feature::FrameInter },
            1,
        );
        let frame_start_bits = w.bit_len();
        w.write_bit(is_intra);

        let fc = FrameCtx {
            orig,
            prev: prev_frame.as_ref(),
            is_intra,
        };
        let mut recon = Frame::new(first.crop_width, first.crop_height)
            .expect("dimensions validated by Frame");

        for ctu_y in (0..first.height).step_by(cfg.ctu_size) {
            for ctu_x in (0..first.width).step_by(cfg.ctu_size) {
                let mut best: Option<(f64, u8, NodeDecision)> = None;
                for &qp in &qp_options {
                    let decision =
                        evaluate_node(&enc, &fc, &mut recon, ctu_x, ctu_y, cfg.ctu_size, 0, qp);
                    let delta_bits = if cfg.delta_qp_range > 0 {
                        se_len(i64::from(qp) - i64::from(cfg.qp_base))
                    } else {
                        0
                    };
                    let total = decision.cost + enc.bit_cost(delta_bits);
                    if best.as_ref().is_none_or(|(c, _, _)| total < *c) {
                        best = Some((total, qp, decision));
                    }
                }
                let (_, qp, decision) = best.expect("at least one qp option");
                apply_decision(&mut recon, ctu_x, ctu_y, cfg.ctu_size, &decision);
                stats.qp_histogram[usize::from(qp)] += 1;

                let before = w.bit_len();
                let mut delta_bits = 0;
                if cfg.delta_qp_range > 0 {
                    let delta = i64::from(qp) - i64::from(cfg.qp_base);
                    w.write_se(delta);
                    delta_bits = se_len(delta);
                }
                write_node(&mut w, &decision, 0, cfg.max_split_depth);
                debug_assert_eq!(
                    w.bit_len() - before,
                    decision.bits + delta_bits,
                    "bit accounting drift at ctu ({ctu_x}, {ctu_y})"
                );

                let mut commit = CtuCommit {
                    counts: &mut counts,
                    mode_map: &mut stats.mode_map,
                    block_energy_sum: &mut stats.block_energy_sum,
                    frame: fi as u16,
                    qp,
                };
                commit_node(&mut commit, ctu_x, ctu_y, cfg.ctu_size, 0, &decision);
            }
        }
        w.align();
        stats.frame_bits.push(w.bit_len() - frame_start_bits);
        stats.recon.push(recon.clone());
        prev_frame = Some(recon);
    }

    let bitstream = Bitstream {
        header,
        payload: w.into_bytes(),
    };
    stats.total_bytes = bitstream.total_bytes();
    stats.feature_counts = counts;
    stats.energy_joules = match model {
        BlockEnergyModel::FeatureBased(energies) => {
            estimate_energy_bf(&stats.feature_counts, energies)
        }
        BlockEnergyModel::RateProportional { joules_per_bit } => {
            joules_per_bit * (stats.total_bytes as f64) * 8.0
        }
    };
    Ok(EncodeOutcome { bitstream, stats })
}

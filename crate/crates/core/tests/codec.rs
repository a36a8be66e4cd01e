//! End-to-end codec behavior: reconstruction closure, feature agreement,
//! the pure-RDO equivalence oracle, and bitstream robustness.

use derdo_core::codec::{
    decode_sequence, encode_sequence, Bitstream, BlockEnergyModel, EncoderConfig,
};
use derdo_core::energy::{estimate_energy_bf, Feature, SpecificEnergies};
use derdo_core::frame::Frame;
use derdo_core::lagrange::{lambdas_from_qp_tau, LagrangePair, RhoEpsilon};
use derdo_core::synth::{synthetic_clip, SynthKind};

fn natural_clip(frames: usize) -> Vec<Frame> {
    synthetic_clip(
        SynthKind::MovingTexture { velocity: (1.5, 0.5) },
        48,
        32,
        frames,
        42,
    )
    .unwrap()
}

fn config(qp: u8, tau: f64) -> EncoderConfig {
    EncoderConfig {
        qp_base: qp,
        tau,
        intra_period: 4,
        ..EncoderConfig::default()
    }
}

fn feature_model() -> BlockEnergyModel {
    BlockEnergyModel::FeatureBased(SpecificEnergies::synthetic_default())
}

fn pair_for(cfg: &EncoderConfig) -> LagrangePair {
    cfg.lambda_pair().unwrap()
}

#[test]
fn decoder_matches_encoder_reconstruction_and_tallies() {
    let clip = natural_clip(4);
    for &(qp, tau, dqp) in &[(27u8, 0.0, 0u8), (32, 0.5, 0), (37, 1.0, 0), (27, 0.5, 5)] {
        let mut cfg = config(qp, tau);
        cfg.delta_qp_range = dqp;
        let out = encode_sequence(&clip, &cfg, &feature_model(), &pair_for(&cfg)).unwrap();
        let (decoded, counts) = decode_sequence(&out.bitstream).unwrap();
        assert_eq!(decoded, out.stats.recon, "qp={qp} tau={tau} dqp={dqp}");
        assert_eq!(counts, out.stats.feature_counts, "qp={qp} tau={tau} dqp={dqp}");
        counts.validate(clip[0].width, clip[0].height, clip.len()).unwrap();
    }
}

#[test]
fn bitstream_bytes_round_trip_through_the_file_form() {
    let clip = natural_clip(2);
    let cfg = config(30, 0.2);
    let out = encode_sequence(&clip, &cfg, &feature_model(), &pair_for(&cfg)).unwrap();
    let bytes = out.bitstream.to_bytes();
    assert_eq!(bytes.len(), out.stats.total_bytes);
    let parsed = Bitstream::from_bytes(&bytes).unwrap();
    assert_eq!(parsed, out.bitstream);
    let (decoded, _) = decode_sequence(&parsed).unwrap();
    assert_eq!(decoded, out.stats.recon);
}

#[test]
fn static_gray_codes_second_frame_as_skip() {
    let clip = synthetic_clip(SynthKind::StaticGray(128), 32, 32, 2, 1).unwrap();
    let cfg = config(32, 0.0);
    let out = encode_sequence(&clip, &cfg, &feature_model(), &pair_for(&cfg)).unwrap();
    let second_frame_leaves: Vec<_> = out
        .stats
        .mode_map
        .iter()
        .filter(|r| r.frame == 1)
        .collect();
    assert!(!second_frame_leaves.is_empty());
    assert!(second_frame_leaves
        .iter()
        .all(|r| r.mode == derdo_core::codec::Mode::Skip));
    // Skips are 16x16 and nearly free: frame type bit + 4 CTUs * 2 bits,
    // padded to a byte boundary.
    assert!(out.stats.frame_bits[1] <= 16, "{}", out.stats.frame_bits[1]);
}

#[test]
fn raising_tau_trades_rate_for_energy() {
    let clip = natural_clip(4);
    let run = |tau: f64| {
        let cfg = config(27, tau);
        encode_sequence(&clip, &cfg, &feature_model(), &pair_for(&cfg)).unwrap()
    };
    let rdo = run(0.0);
    let derdo = run(0.5);
    assert!(
        rdo.stats.total_bytes <= derdo.stats.total_bytes,
        "rate: {} vs {}",
        rdo.stats.total_bytes,
        derdo.stats.total_bytes
    );
    assert!(
        rdo.stats.energy_joules >= derdo.stats.energy_joules,
        "energy: {} vs {}",
        rdo.stats.energy_joules,
        derdo.stats.energy_joules
    );
}

#[test]
fn rate_proportional_energy_collapses_to_plain_rdo() {
    let clip = natural_clip(3);
    let re = RhoEpsilon::default_untrained();
    for &kappa in &[1e-4, 1e-3] {
        for &qp in &[27u8, 37] {
            let mut cfg = config(qp, 0.5);
            let pair = lambdas_from_qp_tau(qp, 0.5, &re, 3.0).unwrap();
            let derdo = encode_sequence(
                &clip,
                &cfg,
                &BlockEnergyModel::RateProportional { joules_per_bit: kappa },
                &pair,
            )
            .unwrap();

            let folded = LagrangePair::new(pair.lambda_r + kappa * pair.lambda_e, 0.0).unwrap();
            cfg.tau = 0.0;
            let rdo = encode_sequence(&clip, &cfg, &feature_model(), &folded).unwrap();

            assert_eq!(derdo.stats.mode_map, rdo.stats.mode_map, "kappa={kappa} qp={qp}");
            assert_eq!(derdo.bitstream, rdo.bitstream, "kappa={kappa} qp={qp}");
        }
    }
}

#[test]
fn rate_decreases_monotonically_in_qp() {
    let clip = natural_clip(4);
    let mut prev: Option<usize> = None;
    for qp in [22u8, 27, 32, 37] {
        let cfg = config(qp, 0.0);
        let out = encode_sequence(&clip, &cfg, &feature_model(), &pair_for(&cfg)).unwrap();
        if let Some(p) = prev {
            assert!(
                out.stats.total_bytes <= p,
                "qp={qp}: {} > {}",
                out.stats.total_bytes,
                p
            );
        }
        prev = Some(out.stats.total_bytes);
    }
}

#[test]
fn block_energies_sum_to_the_sequence_estimate() {
    let clip = natural_clip(4);
    let energies = SpecificEnergies::synthetic_default();
    let cfg = config(30, 0.3);
    let out = encode_sequence(
        &clip,
        &cfg,
        &BlockEnergyModel::FeatureBased(energies.clone()),
        &pair_for(&cfg),
    )
    .unwrap();
    let counts = &out.stats.feature_counts;
    let frame_level = energies.get(Feature::Offset)
        + counts.get(Feature::FrameIntra) as f64 * energies.get(Feature::FrameIntra)
        + counts.get(Feature::FrameInter) as f64 * energies.get(Feature::FrameInter);
    let total = out.stats.block_energy_sum + frame_level;
    let estimate = estimate_energy_bf(counts, &energies);
    assert!(
        (total - estimate).abs() <= 1e-9 * estimate,
        "{total} vs {estimate}"
    );
    assert!((out.stats.energy_joules - estimate).abs() <= 1e-12 * estimate);
}

#[test]
fn truncated_and_corrupted_payloads_fail_cleanly() {
    let clip = natural_clip(3);
    let cfg = config(30, 0.0);
    let out = encode_sequence(&clip, &cfg, &feature_model(), &pair_for(&cfg)).unwrap();
    let bytes = out.bitstream.to_bytes();

    // Truncating the payload by one byte is a structured error.
    let truncated = Bitstream::from_bytes(&bytes[..bytes.len() - 1]).unwrap();
    assert!(decode_sequence(&truncated).is_err());

    // Bit flips anywhere either decode or error, but never panic.
    for i in 0..bytes.len() {
        let mut corrupt = bytes.clone();
        corrupt[i] ^= 0x55;
        if let Ok(stream) = Bitstream::from_bytes(&corrupt) {
            let _ = decode_sequence(&stream);
        }
    }
}

#[test]
fn padded_input_encodes_and_crops_back() {
    // 24x20 pads to 32x32 internally; the decoded crop matches the source
    // dimensions and quality is measured on the crop.
    let clip = synthetic_clip(SynthKind::MovingTexture { velocity: (1.0, 0.0) }, 24, 20, 2, 9)
        .unwrap();
    assert_eq!(clip[0].width, 32);
    assert_eq!(clip[0].crop_width, 24);
    let cfg = config(27, 0.0);
    let out = encode_sequence(&clip, &cfg, &feature_model(), &pair_for(&cfg)).unwrap();
    assert_eq!(out.bitstream.header.width, 24);
    assert_eq!(out.bitstream.header.height, 20);
    let (decoded, _) = decode_sequence(&out.bitstream).unwrap();
    assert_eq!(decoded[0].crop_width, 24);
    let q = derdo_core::frame::sequence_psnr(&clip, &decoded, 24, 20).unwrap();
    assert!(q.psnr_yuv > 25.0, "{}", q.psnr_yuv);
}

#[test]
fn encode_rejects_bad_inputs() {
    let clip = natural_clip(2);
    let cfg = config(30, 0.0);
    assert!(encode_sequence(&[], &cfg, &feature_model(), &pair_for(&cfg)).is_err());
    let mut mixed = clip.clone();
    mixed.push(synthetic_clip(SynthKind::StaticGray(10), 64, 32, 1, 0).unwrap().remove(0));
    assert!(encode_sequence(&mixed, &cfg, &feature_model(), &pair_for(&cfg)).is_err());
}

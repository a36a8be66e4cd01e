//! A self-contained block-based video codec and optimization laboratory.
//!
//! The encoder performs decoding-energy-rate-distortion optimization: coding
//! modes are chosen by minimizing `D + lambda_r * R + lambda_e * E`, where the
//! decoding energy `E` is estimated at encode time from a bit-stream-feature
//! energy model. The crate also provides the lambda/QP control law with the
//! rate-energy knob `tau`, model training (least squares over features and
//! high-level parameters), Bjontegaard-delta metrics for rate and decoding
//! energy, and a sweep harness that produces rate-energy diagrams.
//!
//! Layout:
//! - [`frame`]: raw YUV 4:2:0 I/O and YUV-PSNR measurement
//! - [`bits`]: bit packing and exp-Golomb coding
//! - [`transform`]: 2D DCT, quantization, zig-zag scan
//! - [`energy`]: feature counting, specific energies, energy estimators
//! - [`lagrange`]: lambda/QP algebra and DERD cost functions
//! - [`codec`]: the block-based encoder and decoder
//! - [`optimize`]: multi/single QP optimization and the rho/epsilon fit
//! - [`calibrate`]: specific-energy training from decoder timings
//! - [`bd`]: Bjontegaard-delta rate and decoding-energy metrics
//! - [`sweep`]: sweep orchestration and CSV/SVG reports
//! - [`synth`]: deterministic synthetic test clips

pub mod bd;
pub mod bits;
pub mod calibrate;
pub mod codec;
pub mod energy;
pub mod frame;
pub mod lagrange;
pub mod optimize;
pub mod sweep;
pub mod synth;
pub mod transform;

pub use codec::{decode_sequence, encode_sequence, Bitstream, EncoderConfig};
pub use energy::{FeatureCounts, SpecificEnergies};
pub use frame::Frame;
pub use lagrange::{LagrangePair, RhoEpsilon};

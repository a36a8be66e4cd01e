//! A deterministic block-based hybrid codec: intra/inter prediction, 2D
//! DCT, mid-tread quantization, and exp-Golomb entropy coding over a
//! 16/8/4 quadtree. The mode search minimizes
//! `D + lambda_r * bits + lambda_e * energy`; the decoder reconstructs any
//! conforming bitstream without knowing how the encoder traded those off.
//!
//! Bitstream layout (bit-exact):
//! - header: magic `DERD`, version byte 0x01, width/height/frame_count as
//!   16-bit big-endian, then ctu_size, qp_base, intra_period, and a
//!   delta-QP-enabled byte
//! - payload, MSB-first: per frame one frame-type bit (1 = intra), then
//!   per CTU an optional signed-EG QP delta, quadtree split flags, and
//!   leaf syntax (unsigned-EG mode id, two signed-EG half-pel motion
//!   components for inter, a coded-block flag, and per transform block a
//!   nonzero count followed by zig-zag position deltas and signed levels);
//!   each frame is zero-padded to a byte boundary.

mod decoder;
mod encoder;
mod predict;
mod recon;
mod syntax;

pub use decoder::decode_sequence;
pub use encoder::{encode_sequence, EncodeOutcome, EncodeStats, LeafRecord};
pub use predict::{chroma_mv, half_pel_predict, intra_predict, IntraMode, PlaneRef};

use std::fmt;

use crate::bits::BitError;
use crate::energy::{BlockClass, SpecificEnergies};
use crate::frame::CTU_SIZE;
use crate::lagrange::{
    default_rough_compensation, lambdas_from_qp_tau, LagrangeError, LagrangePair, RhoEpsilon,
    DEFAULT_TAU_EXPONENT,
};

#[derive(Debug)]
pub enum CodecError {
    Config(String),
    EmptyInput,
    DimensionMismatch,
    BadMagic,
    BadVersion(u8),
    InvalidHeader(String),
    /// Payload ended before the syntax did.
    Truncated,
    InvalidSyntax(String),
    Lagrange(LagrangeError),
}

impl fmt::Display for CodecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodecError::Config(msg) => write!(f, "invalid encoder config: {msg}"),
            CodecError::EmptyInput => write!(f, "no frames to encode"),
            CodecError::DimensionMismatch => write!(f, "frame dimensions do not match"),
            CodecError::BadMagic => write!(f, "not a DERD bitstream"),
            CodecError::BadVersion(v) => write!(f, "unsupported bitstream version {v}"),
            CodecError::InvalidHeader(msg) => write!(f, "invalid header: {msg}"),
            CodecError::Truncated => write!(f, "truncated payload"),
            CodecError::InvalidSyntax(msg) => write!(f, "invalid syntax: {msg}"),
            CodecError::Lagrange(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CodecError {}

impl From<BitError> for CodecError {
    fn from(e: BitError) -> Self {
        match e {
            BitError::OutOfBits => CodecError::Truncated,
            BitError::MalformedPrefix => CodecError::InvalidSyntax("malformed codeword".into()),
            BitError::Overflow => CodecError::InvalidSyntax("value out of range".into()),
        }
    }
}

impl From<LagrangeError> for CodecError {
    fn from(e: LagrangeError) -> Self {
        CodecError::Lagrange(e)
    }
}

/// Coding modes, ordered by tie-break priority.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    Skip = 0,
    Inter = 1,
    IntraDc = 2,
    IntraH = 3,
    IntraV = 4,
}

impl Mode {
    pub fn id(self) -> u64 {
        self as u64
    }

    pub fn from_id(id: u64) -> Option<Mode> {
        match id {
            0 => Some(Mode::Skip),
            1 => Some(Mode::Inter),
            2 => Some(Mode::IntraDc),
            3 => Some(Mode::IntraH),
            4 => Some(Mode::IntraV),
            _ => None,
        }
    }

    pub fn is_intra(self) -> bool {
        matches!(self, Mode::IntraDc | Mode::IntraH | Mode::IntraV)
    }

    pub fn block_class(self) -> BlockClass {
        match self {
            Mode::Skip => BlockClass::Skip,
            Mode::Inter => BlockClass::Inter,
            _ => BlockClass::Intra,
        }
    }

    pub fn intra_kind(self) -> Option<IntraMode> {
        match self {
            Mode::IntraDc => Some(IntraMode::Dc),
            Mode::IntraH => Some(IntraMode::Horizontal),
            Mode::IntraV => Some(IntraMode::Vertical),
            _ => None,
        }
    }
}

/// Motion vector in half-pel units.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct MotionVector {
    pub x: i32,
    pub y: i32,
}

impl MotionVector {
    pub const ZERO: MotionVector = MotionVector { x: 0, y: 0 };

    /// True when either component addresses a half-pel position.
    pub fn is_fracpel(&self) -> bool {
        (self.x | self.y) & 1 != 0
    }
}

/// How the encoder estimates per-block decoding energy.
#[derive(Clone, Debug)]
pub enum BlockEnergyModel {
    /// The bit-stream-feature model: sum the specific energies of the
    /// features the decoder will exercise for the block.
    FeatureBased(SpecificEnergies),
    /// Baseline model: energy strictly proportional to coded bits. With
    /// this model the cost collapses to plain RDO at
    /// `lambda_r + joules_per_bit * lambda_e`, at both cost levels.
    RateProportional { joules_per_bit: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderConfig {
    /// Coding-tree size; only 16 is supported.
    pub ctu_size: usize,
    /// Maximum quadtree depth (2 -> block sizes 16/8/4).
    pub max_split_depth: usize,
    pub qp_base: u8,
    /// CTU-level QP search radius: 0 (off) or 5.
    pub delta_qp_range: u8,
    /// Rate-energy knob in [0, 1].
    pub tau: f64,
    /// An intra frame every `intra_period` frames (frame 0 is always intra).
    pub intra_period: u8,
    /// Integer-pel full-search radius for motion estimation.
    pub motion_search_range: i32,
    pub rho: f64,
    pub epsilon: f64,
    pub tau_exponent: f64,
    /// Multiplier on `sqrt(lambda_e)` in rough costs.
    pub rough_compensation: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        let re = RhoEpsilon::default_untrained();
        EncoderConfig {
            ctu_size: CTU_SIZE,
            max_split_depth: 2,
            qp_base: 32,
            delta_qp_range: 0,
            tau: 0.0,
            intra_period: 32,
            motion_search_range: 8,
            rho: re.rho,
            epsilon: re.epsilon,
            tau_exponent: DEFAULT_TAU_EXPONENT,
            rough_compensation: default_rough_compensation(),
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), CodecError> {
        let err = |msg: String| Err(CodecError::Config(msg));
        if self.ctu_size != CTU_SIZE {
            return err(format!("ctu_size {} (only {CTU_SIZE} supported)", self.ctu_size));
        }
        if self.max_split_depth > 2 {
            return err(format!("max_split_depth {} > 2", self.max_split_depth));
        }
        if self.qp_base > 51 {
            return err(format!("qp_base {} outside [0, 51]", self.qp_base));
        }
        if self.delta_qp_range != 0 && self.delta_qp_range != 5 {
            return err(format!("delta_qp_range {} not in {{0, 5}}", self.delta_qp_range));
        }
        let lo = i32::from(self.qp_base) - i32::from(self.delta_qp_range);
        let hi = i32::from(self.qp_base) + i32::from(self.delta_qp_range);
        if lo < 0 || hi > 51 {
            return err(format!("qp range [{lo}, {hi}] leaves [0, 51]"));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return err(format!("tau {} outside [0, 1]", self.tau));
        }
        if self.intra_period == 0 {
            return err("intra_period must be >= 1".into());
        }
        if !(1..=8).contains(&self.motion_search_range) {
            return err(format!(
                "motion_search_range {} outside [1, 8]",
                self.motion_search_range
            ));
        }
        if self.rho <= 0.0 || self.epsilon <= 0.0 {
            return err("rho and epsilon must be positive".into());
        }
        if self.tau_exponent <= 0.0 {
            return err("tau_exponent must be positive".into());
        }
        if self.rough_compensation < 0.0 {
            return err("rough_compensation must be >= 0".into());
        }
        Ok(())
    }

    pub fn rho_epsilon(&self) -> Result<RhoEpsilon, CodecError> {
        Ok(RhoEpsilon::new(self.rho, self.epsilon)?)
    }

    /// The lambda pair for this config's (qp_base, tau).
    pub fn lambda_pair(&self) -> Result<LagrangePair, CodecError> {
        let re = self.rho_epsilon()?;
        Ok(lambdas_from_qp_tau(self.qp_base, self.tau, &re, self.tau_exponent)?)
    }
}

pub const MAGIC: [u8; 4] = *b"DERD";
pub const VERSION: u8 = 0x01;
const HEADER_LEN: usize = 15;

/// Fixed-size bitstream header. Width/height are the source (crop)
/// dimensions; coding dimensions are padded up to the CTU size.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Header {
    pub width: u16,
    pub height: u16,
    pub frame_count: u16,
    pub ctu_size: u8,
    pub qp_base: u8,
    pub intra_period: u8,
    pub delta_qp_enabled: bool,
}

impl Header {
    pub fn padded_width(&self) -> usize {
        (self.width as usize).div_ceil(CTU_SIZE) * CTU_SIZE
    }

    pub fn padded_height(&self) -> usize {
        (self.height as usize).div_ceil(CTU_SIZE) * CTU_SIZE
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(&MAGIC);
        b[4] = VERSION;
        b[5..7].copy_from_slice(&self.width.to_be_bytes());
        b[7..9].copy_from_slice(&self.height.to_be_bytes());
        b[9..11].copy_from_slice(&self.frame_count.to_be_bytes());
        b[11] = self.ctu_size;
        b[12] = self.qp_base;
        b[13] = self.intra_period;
        b[14] = u8::from(self.delta_qp_enabled);
        b
    }

    pub fn parse(bytes: &[u8]) -> Result<Header, CodecError> {
        if bytes.len() < HEADER_LEN {
            return Err(CodecError::Truncated);
        }
        if bytes[0..4] != MAGIC {
            return Err(CodecError::BadMagic);
        }
        if bytes[4] != VERSION {
            return Err(CodecError::BadVersion(bytes[4]));
        }
        let h = Header {
            width: u16::from_be_bytes([bytes[5], bytes[6]]),
            height: u16::from_be_bytes([bytes[7], bytes[8]]),
            frame_count: u16::from_be_bytes([bytes[9], bytes[10]]),
            ctu_size: bytes[11],
            qp_base: bytes[12],
            intra_period: bytes[13],
            delta_qp_enabled: match bytes[14] {
                0 => false,
                1 => true,
                v => {
                    return Err(CodecError::InvalidHeader(format!(
                        "delta_qp_enabled byte {v}"
                    )))
                }
            },
        };
        if h.ctu_size as usize != CTU_SIZE {
            return Err(CodecError::InvalidHeader(format!("ctu_size {}", h.ctu_size)));
        }
        if h.width == 0 || h.height == 0 || h.width % 2 != 0 || h.height % 2 != 0 {
            return Err(CodecError::InvalidHeader(format!(
                "dimensions {}x{}",
                h.width, h.height
            )));
        }
        if h.qp_base > 51 {
            return Err(CodecError::InvalidHeader(format!("qp_base {}", h.qp_base)));
        }
        if h.intra_period == 0 {
            return Err(CodecError::InvalidHeader("intra_period 0".into()));
        }
        Ok(h)
    }
}

/// A coded sequence: header plus bit-packed payload.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bitstream {
    pub header: Header,
    pub payload: Vec<u8>,
}

impl Bitstream {
    pub fn total_bytes(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.total_bytes());
        out.extend_from_slice(&self.header.to_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Bitstream, CodecError> {
        let header = Header::parse(bytes)?;
        Ok(Bitstream {
            header,
            payload: bytes[HEADER_LEN..].to_vec(),
        })
    }
}

/// Fully parsed syntax of one quadtree leaf.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LeafSyntax {
    pub mode: Mode,
    /// Half-pel motion vector; zero for non-inter modes.
    pub mv: MotionVector,
    /// Coded-block flag: whether any residual is transmitted.
    pub cbf: bool,
    /// Sparse (zig-zag rank, level) lists for Y, U, V, ranks ascending.
    pub coeffs: [Vec<(u16, i32)>; 3],
}

impl LeafSyntax {
    pub fn uncoded(mode: Mode, mv: MotionVector) -> Self {
        LeafSyntax {
            mode,
            mv,
            cbf: false,
            coeffs: [Vec::new(), Vec::new(), Vec::new()],
        }
    }

    /// Fractional-pel interpolation events this leaf causes (0 or 1).
    pub fn fracpel_events(&self) -> u64 {
        u64::from(self.mode == Mode::Inter && self.mv.is_fracpel())
    }

    pub fn nonzero_levels(&self) -> impl Iterator<Item = i32> + '_ {
        self.coeffs.iter().flatten().map(|&(_, l)| l)
    }
}

//! Lagrange-multiplier algebra for decoding-energy-rate-distortion costs.
//!
//! For a fixed QP the two multipliers satisfy
//! `rho * lambda_r + epsilon * lambda_e = q(QP)^2`, and the rate-energy
//! knob `tau` in `[0, 1]` splits that budget:
//! `rho*lambda_r / (epsilon*lambda_e) = (1/tau - 1)^a`. `tau = 0` is pure
//! rate-distortion optimization (`lambda_e = 0`), `tau = 1` is pure
//! decoding-energy optimization (`lambda_r = 0`).

use std::fmt;

use crate::codec::{Mode, MotionVector};

/// Default exponent of the tau mapping.
pub const DEFAULT_TAU_EXPONENT: f64 = 3.0;

/// Default multiplier applied to `sqrt(lambda_e)` in rough costs. It
/// compensates the scale gap between the two multipliers (lambda_e values
/// run several orders of magnitude above lambda_r).
pub fn default_rough_compensation() -> f64 {
    (5.0e6f64).sqrt()
}

/// Default constants of the high-level energy model used to derive the
/// default `epsilon` (joule-per-pixel domain, fitted for a software
/// decoder on embedded hardware).
pub const DEFAULT_HL_C1: f64 = -2.9e-7;
pub const DEFAULT_HL_C3: f64 = 9.7e-7;
/// Default intra-frame fraction used to derive the default `epsilon`.
pub const DEFAULT_P_INTRA: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub enum LagrangeError {
    QpOutOfRange(i64),
    TauOutOfRange(f64),
    NonPositiveScale(&'static str),
    BothLambdasZero,
    EmptyCandidates,
}

impl fmt::Display for LagrangeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LagrangeError::QpOutOfRange(qp) => write!(f, "qp {qp} outside [0, 51]"),
            LagrangeError::TauOutOfRange(t) => write!(f, "tau {t} outside [0, 1]"),
            LagrangeError::NonPositiveScale(what) => write!(f, "{what} must be positive"),
            LagrangeError::BothLambdasZero => write!(f, "both lambdas are zero"),
            LagrangeError::EmptyCandidates => write!(f, "empty candidate list"),
        }
    }
}

impl std::error::Error for LagrangeError {}

/// The scale factors linking the weighted lambda sum to `q^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RhoEpsilon {
    pub rho: f64,
    pub epsilon: f64,
}

impl RhoEpsilon {
    pub fn new(rho: f64, epsilon: f64) -> Result<Self, LagrangeError> {
        if rho <= 0.0 || !rho.is_finite() {
            return Err(LagrangeError::NonPositiveScale("rho"));
        }
        if epsilon <= 0.0 || !epsilon.is_finite() {
            return Err(LagrangeError::NonPositiveScale("epsilon"));
        }
        Ok(RhoEpsilon { rho, epsilon })
    }

    /// Defaults before any fit: `rho = 3/2` and `epsilon` derived from the
    /// default high-level model constants at [`DEFAULT_P_INTRA`].
    pub fn default_untrained() -> Self {
        RhoEpsilon {
            rho: 1.5,
            epsilon: 1.5 * (DEFAULT_HL_C1 * DEFAULT_P_INTRA + DEFAULT_HL_C3),
        }
    }

    /// CSV with header `rho,epsilon` and one value row.
    pub fn to_csv_string(&self) -> String {
        format!("rho,epsilon\n{},{}\n", self.rho, self.epsilon)
    }

    pub fn from_csv_str(csv: &str) -> Result<Self, String> {
        let mut lines = csv.lines();
        match lines.next() {
            Some(h) if h.trim() == "rho,epsilon" => {}
            other => return Err(format!("expected header 'rho,epsilon', got {other:?}")),
        }
        let row = lines
            .find(|l| !l.trim().is_empty())
            .ok_or("missing value row")?;
        let mut it = row.split(',');
        let rho: f64 = it
            .next()
            .ok_or("missing rho")?
            .trim()
            .parse()
            .map_err(|e| format!("bad rho: {e}"))?;
        let epsilon: f64 = it
            .next()
            .ok_or("missing epsilon")?
            .trim()
            .parse()
            .map_err(|e| format!("bad epsilon: {e}"))?;
        RhoEpsilon::new(rho, epsilon).map_err(|e| e.to_string())
    }
}

/// The (lambda_r, lambda_e) trade-off weights driving every cost
/// evaluation: cost per bit and cost per joule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LagrangePair {
    pub lambda_r: f64,
    pub lambda_e: f64,
}

impl LagrangePair {
    pub fn new(lambda_r: f64, lambda_e: f64) -> Result<Self, LagrangeError> {
        if lambda_r == 0.0 && lambda_e == 0.0 {
            return Err(LagrangeError::BothLambdasZero);
        }
        Ok(LagrangePair { lambda_r, lambda_e })
    }

    /// Both multipliers scaled by `factor` (used by the multi-QP loop).
    pub fn scaled(&self, factor: f64) -> LagrangePair {
        LagrangePair {
            lambda_r: self.lambda_r * factor,
            lambda_e: self.lambda_e * factor,
        }
    }
}

/// Quantization step for a QP: `q = 2^((qp - 4) / 6)`.
pub fn qp_to_qstep(qp: u8) -> Result<f64, LagrangeError> {
    if qp > 51 {
        return Err(LagrangeError::QpOutOfRange(i64::from(qp)));
    }
    Ok(2f64.powf((f64::from(qp) - 4.0) / 6.0))
}

/// The two multipliers for a (QP, tau) pair.
///
/// `tau = 0` and `tau = 1` are handled by explicit branches (the closed
/// forms divide by zero there): pure RDO and pure energy optimization.
pub fn lambdas_from_qp_tau(
    qp: u8,
    tau: f64,
    re: &RhoEpsilon,
    tau_exponent: f64,
) -> Result<LagrangePair, LagrangeError> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(LagrangeError::TauOutOfRange(tau));
    }
    let q = qp_to_qstep(qp)?;
    let q2 = q * q;
    if tau == 0.0 {
        return Ok(LagrangePair {
            lambda_r: q2 / re.rho,
            lambda_e: 0.0,
        });
    }
    if tau == 1.0 {
        return Ok(LagrangePair {
            lambda_r: 0.0,
            lambda_e: q2 / re.epsilon,
        });
    }
    let t = 1.0 / tau - 1.0;
    Ok(LagrangePair {
        lambda_r: q2 / (re.rho * (1.0 + t.powf(-tau_exponent))),
        lambda_e: q2 / (re.epsilon * (1.0 + t.powf(tau_exponent))),
    })
}

/// Real-valued QP for a lambda pair: `4 + 3 * log2(rho*l_r + eps*l_e)`.
pub fn qp_from_lambdas(pair: &LagrangePair, re: &RhoEpsilon) -> Result<f64, LagrangeError> {
    let s = re.rho * pair.lambda_r + re.epsilon * pair.lambda_e;
    if s <= 0.0 {
        return Err(LagrangeError::BothLambdasZero);
    }
    Ok(4.0 + 3.0 * s.log2())
}

/// Rounds a real QP half-up to the integer used for coding.
pub fn round_qp(qp: f64) -> i32 {
    (qp + 0.5).floor() as i32
}

/// Precise cost: `J = D + lambda_r * bits + lambda_e * energy`.
pub fn cost_precise(distortion: f64, bits: u64, block_energy: f64, pair: &LagrangePair) -> f64 {
    distortion + pair.lambda_r * bits as f64 + pair.lambda_e * block_energy
}

/// Rough cost with square-rooted multipliers:
/// `J = D_sad + sqrt(lambda_r) * bits + compensation * sqrt(lambda_e) * energy`.
pub fn cost_rough(
    sad: f64,
    bits: u64,
    block_energy: f64,
    pair: &LagrangePair,
    compensation: f64,
) -> f64 {
    sad + pair.lambda_r.sqrt() * bits as f64
        + compensation * pair.lambda_e.sqrt() * block_energy
}

/// One evaluated coding option for a block.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeCandidate {
    pub mode: Mode,
    pub mv: MotionVector,
    /// Sum of squared differences over Y, U, and V.
    pub distortion: f64,
    /// Exact syntax bits the entropy writer produces for this candidate.
    pub bits: u64,
    /// Estimated decoding energy of this block in joules.
    pub block_energy: f64,
}

impl ModeCandidate {
    pub fn cost(&self, pair: &LagrangePair) -> f64 {
        cost_precise(self.distortion, self.bits, self.block_energy, pair)
    }

    /// Deterministic tie-break key: mode id, then squared motion length,
    /// then (y, x) lexicographically.
    fn tie_key(&self) -> (u8, i64, i32, i32) {
        (
            self.mode as u8,
            i64::from(self.mv.x) * i64::from(self.mv.x)
                + i64::from(self.mv.y) * i64::from(self.mv.y),
            self.mv.y,
            self.mv.x,
        )
    }
}

/// Index of the candidate with the lowest precise cost. Ties resolve by
/// the lowest mode id, then the shorter motion vector.
pub fn choose_mode(
    candidates: &[ModeCandidate],
    pair: &LagrangePair,
) -> Result<usize, LagrangeError> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let cost = c.cost(pair);
        best = match best {
            None => Some((i, cost)),
            Some((bi, bc)) => {
                if cost < bc
                    || (cost == bc && c.tie_key() < candidates[bi].tie_key())
                {
                    Some((i, cost))
                } else {
                    Some((bi, bc))
                }
            }
        };
    }
    best.map(|(i, _)| i).ok_or(LagrangeError::EmptyCandidates)
}

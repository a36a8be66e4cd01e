//! The two encoder-driving optimization pipelines and the least-squares
//! fit of the lambda/QP relation.
//!
//! Multi-QP optimization encodes with a CTU-level QP search, reads off the
//! most frequently chosen QP ("QP*"), and rescales the lambda pair (double
//! or halve, a +/-3 QP move) until QP* leaves the borders of the allowed
//! range. The resulting (lambda_r, lambda_e, QP*) triples train rho and
//! epsilon; single-QP optimization then encodes in one shot with a fixed
//! QP derived from those trained values.

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::codec::{
    encode_sequence, BlockEnergyModel, CodecError, EncodeOutcome, EncoderConfig,
};
use crate::frame::Frame;
use crate::lagrange::{lambdas_from_qp_tau, LagrangePair, RhoEpsilon};

#[derive(Debug)]
pub enum OptimizeError {
    Codec(CodecError),
    NotEnoughTriples(usize),
    /// One of the scale factors cannot be identified from the data.
    Unidentifiable(&'static str),
    Degenerate(String),
}

impl fmt::Display for OptimizeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OptimizeError::Codec(e) => write!(f, "{e}"),
            OptimizeError::NotEnoughTriples(n) => {
                write!(f, "{n} triples, need at least 2")
            }
            OptimizeError::Unidentifiable(p) => {
                write!(f, "parameter {p} is unidentifiable from the given triples")
            }
            OptimizeError::Degenerate(msg) => write!(f, "degenerate fit: {msg}"),
        }
    }
}

impl std::error::Error for OptimizeError {}

impl From<CodecError> for OptimizeError {
    fn from(e: CodecError) -> Self {
        OptimizeError::Codec(e)
    }
}

/// A (lambda_r, lambda_e, QP*) observation from multi-QP optimization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QpTriple {
    pub lambda_r: f64,
    pub lambda_e: f64,
    pub qp_star: i32,
}

impl QpTriple {
    /// CSV with header `lambda_r,lambda_e,qp_star`.
    pub fn to_csv_string(triples: &[QpTriple]) -> String {
        let mut s = String::from("lambda_r,lambda_e,qp_star\n");
        for t in triples {
            s.push_str(&format!("{},{},{}\n", t.lambda_r, t.lambda_e, t.qp_star));
        }
        s
    }

    pub fn from_csv_str(csv: &str) -> Result<Vec<QpTriple>, String> {
        let mut lines = csv.lines();
        match lines.next() {
            Some(h) if h.trim() == "lambda_r,lambda_e,qp_star" => {}
            other => {
                return Err(format!(
                    "expected header 'lambda_r,lambda_e,qp_star', got {other:?}"
                ))
            }
        }
        let mut out = Vec::new();
        for line in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 3 {
                return Err(format!("bad row: {line}"));
            }
            out.push(QpTriple {
                lambda_r: parts[0].trim().parse().map_err(|e| format!("bad lambda_r: {e}"))?,
                lambda_e: parts[1].trim().parse().map_err(|e| format!("bad lambda_e: {e}"))?,
                qp_star: parts[2].trim().parse().map_err(|e| format!("bad qp_star: {e}"))?,
            });
        }
        Ok(out)
    }

    pub fn load_csv(path: &Path) -> Result<Vec<QpTriple>, String> {
        Self::from_csv_str(&std::fs::read_to_string(path).map_err(|e| e.to_string())?)
    }
}

/// Result of one multi-QP optimization run.
#[derive(Debug)]
pub struct MultiQpOutcome {
    pub outcome: EncodeOutcome,
    pub triple: QpTriple,
    /// False when the iteration cap was reached with QP* still on a border.
    pub converged: bool,
    /// (lambda pair, QP*) per iteration, in order.
    pub trajectory: Vec<(LagrangePair, i32)>,
}

const MULTI_QP_MAX_ITERATIONS: usize = 10;

/// Most frequent QP in the histogram; ties resolve to the lower QP.
pub fn histogram_peak(hist: &[u64; 52]) -> Option<i32> {
    let mut best: Option<(i32, u64)> = None;
    for (qp, &count) in hist.iter().enumerate() {
        if count > 0 && best.is_none_or(|(_, c)| count > c) {
            best = Some((qp as i32, count));
        }
    }
    best.map(|(qp, _)| qp)
}

/// Multi-QP optimization for one (qp_base, tau) configuration.
///
/// Encodes with `delta_qp_range = 5`; when QP* sits at the lower border
/// both lambdas double, at the upper border both halve, until QP* is
/// interior or the iteration cap is hit (best-so-far wins then).
pub fn multi_qp_optimize(
    frames: &[Frame],
    cfg: &EncoderConfig,
    model: &BlockEnergyModel,
    re: &RhoEpsilon,
) -> Result<MultiQpOutcome, OptimizeError> {
    let mut cfg = cfg.clone();
    cfg.delta_qp_range = 5;
    cfg.rho = re.rho;
    cfg.epsilon = re.epsilon;
    cfg.validate()?;

    let mut pair = lambdas_from_qp_tau(cfg.qp_base, cfg.tau, re, cfg.tau_exponent)
        .map_err(CodecError::from)?;
    let lower = i32::from(cfg.qp_base) - i32::from(cfg.delta_qp_range);
    let upper = i32::from(cfg.qp_base) + i32::from(cfg.delta_qp_range);

    let mut trajectory = Vec::new();
    let mut best: Option<(i32, EncodeOutcome, QpTriple)> = None;
    let mut converged = false;
    for _ in 0..MULTI_QP_MAX_ITERATIONS {
        let outcome = encode_sequence(frames, &cfg, model, &pair)?;
        let qp_star = histogram_peak(&outcome.stats.qp_histogram)
            .expect("encoded at least one ctu");
        trajectory.push((pair, qp_star));
        let triple = QpTriple {
            lambda_r: pair.lambda_r,
            lambda_e: pair.lambda_e,
            qp_star,
        };
        let distance = (qp_star - i32::from(cfg.qp_base)).abs();
        if best
            .as_ref()
            .is_none_or(|(d, _, _)| distance < *d)
        {
            best = Some((distance, outcome, triple));
        }
        if qp_star == lower {
            pair = pair.scaled(2.0);
        } else if qp_star == upper {
            pair = pair.scaled(0.5);
        } else {
            converged = true;
            break;
        }
    }
    let (_, outcome, triple) = best.expect("at least one iteration");
    Ok(MultiQpOutcome {
        outcome,
        triple,
        converged,
        trajectory,
    })
}

/// One-shot encode with `delta_qp_range = 0` and lambdas derived from the
/// (typically fitted) rho/epsilon. At `tau = 0` this is plain RDO.
pub fn single_qp_optimize(
    frames: &[Frame],
    cfg: &EncoderConfig,
    model: &BlockEnergyModel,
    re: &RhoEpsilon,
) -> Result<EncodeOutcome, OptimizeError> {
    let mut cfg = cfg.clone();
    cfg.delta_qp_range = 0;
    cfg.rho = re.rho;
    cfg.epsilon = re.epsilon;
    cfg.validate()?;
    let pair = lambdas_from_qp_tau(cfg.qp_base, cfg.tau, re, cfg.tau_exponent)
        .map_err(CodecError::from)?;
    Ok(encode_sequence(frames, &cfg, model, &pair)?)
}

/// Fit quality report for [`fit_rho_epsilon`].
#[derive(Clone, Copy, Debug)]
pub struct RhoEpsilonFit {
    pub re: RhoEpsilon,
    pub mean_abs_qp_error: f64,
    pub max_abs_qp_error: f64,
    pub iterations: usize,
}

const GN_MAX_ITERATIONS: usize = 200;
const GN_STEP_TOLERANCE: f64 = 1e-10;

/// Least-squares fit of `qp_star = 4 + 3 * log2(rho*l_r + eps*l_e)` over
/// the triples. Positivity is enforced by optimizing `log rho` and
/// `log epsilon` with a damped Gauss-Newton iteration.
pub fn fit_rho_epsilon(triples: &[QpTriple]) -> Result<RhoEpsilonFit, OptimizeError> {
    if triples.len() < 2 {
        return Err(OptimizeError::NotEnoughTriples(triples.len()));
    }
    if triples.iter().all(|t| t.lambda_e == 0.0) {
        return Err(OptimizeError::Unidentifiable("epsilon"));
    }
    if triples.iter().all(|t| t.lambda_r == 0.0) {
        return Err(OptimizeError::Unidentifiable("rho"));
    }

    // Initial guess: linear least squares on t_i = 2^((qp_i - 4) / 3),
    // which the model says equals rho*l_r + eps*l_e.
    let rows = triples.len();
    let mut a = DMatrix::zeros(rows, 2);
    let mut b = DVector::zeros(rows);
    for (i, t) in triples.iter().enumerate() {
        a[(i, 0)] = t.lambda_r;
        a[(i, 1)] = t.lambda_e;
        b[i] = 2f64.powf((f64::from(t.qp_star) - 4.0) / 3.0);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if svd.rank(smax * 1e-12) < 2 {
        return Err(OptimizeError::Degenerate(
            "lambda pairs are collinear; rho and epsilon cannot be separated".into(),
        ));
    }
    let init = svd
        .solve(&b, smax * 1e-12)
        .map_err(|e| OptimizeError::Degenerate(e.to_string()))?;
    // The log-domain iteration needs positive starting values.
    let scale = b.amax();
    let lr_scale = triples.iter().map(|t| t.lambda_r.abs()).fold(0.0, f64::max);
    let le_scale = triples.iter().map(|t| t.lambda_e.abs()).fold(0.0, f64::max);
    let mut u = init[0].max(1e-9 * scale / lr_scale.max(1e-300)).ln();
    let mut v = init[1].max(1e-9 * scale / le_scale.max(1e-300)).ln();

    let residuals = |u: f64, v: f64| -> Vec<f64> {
        let (rho, eps) = (u.exp(), v.exp());
        triples
            .iter()
            .map(|t| {
                let s = rho * t.lambda_r + eps * t.lambda_e;
                f64::from(t.qp_star) - (4.0 + 3.0 * s.log2())
            })
            .collect()
    };
    let sse = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>();

    let mut iterations = 0;
    for _ in 0..GN_MAX_ITERATIONS {
        iterations += 1;
        let r = residuals(u, v);
        let current_sse = sse(&r);
        let (rho, eps) = (u.exp(), v.exp());
        // Jacobian of the residuals wrt (u, v).
        let k = 3.0 / std::f64::consts::LN_2;
        let mut jtj: Matrix2<f64> = Matrix2::zeros();
        let mut jtr: Vector2<f64> = Vector2::zeros();
        for (t, ri) in triples.iter().zip(&r) {
            let s = rho * t.lambda_r + eps * t.lambda_e;
            let ju = -k * rho * t.lambda_r / s;
            let jv = -k * eps * t.lambda_e / s;
            jtj[(0, 0)] += ju * ju;
            jtj[(0, 1)] += ju * jv;
            jtj[(1, 0)] += ju * jv;
            jtj[(1, 1)] += jv * jv;
            jtr[0] += ju * ri;
            jtr[1] += jv * ri;
        }
        // Tiny Levenberg damping keeps the 2x2 solve well-posed.
        let mu = 1e-12 * (jtj[(0, 0)] + jtj[(1, 1)]);
        jtj[(0, 0)] += mu;
        jtj[(1, 1)] += mu;
        let step = jtj
            .lu()
            .solve(&(-jtr))
            .ok_or_else(|| OptimizeError::Degenerate("normal equations are singular".into()))?;

        // Damped update: halve the step until the error does not grow.
        let mut factor = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let (nu, nv) = (u + factor * step[0], v + factor * step[1]);
            if sse(&residuals(nu, nv)) <= current_sse {
                u = nu;
                v = nv;
                accepted = true;
                break;
            }
            factor *= 0.5;
        }
        if !accepted {
            break;
        }
        if (factor * step[0]).abs().max((factor * step[1]).abs()) < GN_STEP_TOLERANCE {
            break;
        }
    }

    let re = RhoEpsilon::new(u.exp(), v.exp())
        .map_err(|e| OptimizeError::Degenerate(e.to_string()))?;
    let r = residuals(u, v);
    let mean = r.iter().map(|x| x.abs()).sum::<f64>() / r.len() as f64;
    let max = r.iter().map(|x| x.abs()).fold(0.0, f64::max);
    Ok(RhoEpsilonFit {
        re,
        mean_abs_qp_error: mean,
        max_abs_qp_error: max,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lagrange::{qp_from_lambdas, round_qp};

    #[test]
    fn fit_recovers_synthetic_rho_epsilon() {
        let truth = RhoEpsilon::new(1.5, 1.4463e-6).unwrap();
        let mut triples = Vec::new();
        for qp in [22u8, 27, 32, 37] {
            for tau in [0.1, 0.3, 0.5, 0.7, 0.9] {
                let pair = lambdas_from_qp_tau(qp, tau, &truth, 3.0).unwrap();
                let exact = qp_from_lambdas(&pair, &truth).unwrap();
                triples.push(QpTriple {
                    lambda_r: pair.lambda_r,
                    lambda_e: pair.lambda_e,
                    qp_star: round_qp(exact),
                });
            }
        }
        let fit = fit_rho_epsilon(&triples).unwrap();
        // qp_star carries only rounding noise, so the fit is tight.
        assert!(fit.mean_abs_qp_error <= 0.5, "{}", fit.mean_abs_qp_error);
        assert!((fit.re.rho - truth.rho).abs() / truth.rho < 0.2);
        assert!((fit.re.epsilon - truth.epsilon).abs() / truth.epsilon < 0.2);
    }

    #[test]
    fn fit_errors_name_the_unidentifiable_parameter() {
        let t = QpTriple {
            lambda_r: 10.0,
            lambda_e: 0.0,
            qp_star: 20,
        };
        assert!(matches!(
            fit_rho_epsilon(&[t, t]),
            Err(OptimizeError::Unidentifiable("epsilon"))
        ));
        let t = QpTriple {
            lambda_r: 0.0,
            lambda_e: 1e6,
            qp_star: 20,
        };
        assert!(matches!(
            fit_rho_epsilon(&[t, t]),
            Err(OptimizeError::Unidentifiable("rho"))
        ));
        assert!(matches!(
            fit_rho_epsilon(&[t]),
            Err(OptimizeError::NotEnoughTriples(1))
        ));
    }

    #[test]
    fn collinear_lambda_pairs_are_degenerate() {
        let mk = |s: f64, qp: i32| QpTriple {
            lambda_r: 10.0 * s,
            lambda_e: 2e6 * s,
            qp_star: qp,
        };
        let triples = vec![mk(1.0, 20), mk(2.0, 23), mk(4.0, 26)];
        assert!(matches!(
            fit_rho_epsilon(&triples),
            Err(OptimizeError::Degenerate(_))
        ));
    }

    #[test]
    fn triples_csv_round_trip() {
        let triples = vec![
            QpTriple {
                lambda_r: 12.5,
                lambda_e: 3.4e7,
                qp_star: 27,
            },
            QpTriple {
                lambda_r: 0.25,
                lambda_e: 9.9e5,
                qp_star: 19,
            },
        ];
        let csv = QpTriple::to_csv_string(&triples);
        assert_eq!(QpTriple::from_csv_str(&csv).unwrap(), triples);
    }

    #[test]
    fn histogram_peak_prefers_lower_qp_on_ties() {
        let mut hist = [0u64; 52];
        hist[30] = 5;
        hist[28] = 5;
        hist[35] = 4;
        assert_eq!(histogram_peak(&hist), Some(28));
        assert_eq!(histogram_peak(&[0; 52]), None);
    }
}

//! Bjontegaard-delta metrics over rate or decoding energy.
//!
//! Each curve's `log10(axis)` is interpolated as a function of PSNR with a
//! monotone piecewise-cubic Hermite interpolant, the horizontal gap is
//! integrated over the overlapping PSNR interval with a 1000-point
//! composite trapezoid, and the mean gap maps to a percentage via
//! `100 * (10^gap - 1)`.

use std::fmt;

/// One operating point of an encoded configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub qp: u8,
    pub tau: f64,
    pub rate_bytes: u64,
    pub psnr_yuv_db: f64,
    pub energy_joules: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BdAxis {
    Rate,
    Energy,
}

impl BdAxis {
    pub fn name(self) -> &'static str {
        match self {
            BdAxis::Rate => "rate",
            BdAxis::Energy => "energy",
        }
    }
}

/// Mean relative difference (percent) of the test curve's axis value
/// against the reference at equal quality.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BdResult {
    pub value_percent: f64,
    pub axis: BdAxis,
    pub anchor_tau: f64,
    pub test_tau: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BdError {
    TooFewPoints(usize),
    /// PSNR must strictly increase with the axis value.
    NonMonotone,
    NonPositiveAxis,
    NonFinitePsnr,
    EmptyOverlap,
}

impl fmt::Display for BdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BdError::TooFewPoints(n) => write!(f, "curve has {n} points, need at least 4"),
            BdError::NonMonotone => write!(f, "curve is not strictly increasing in psnr"),
            BdError::NonPositiveAxis => write!(f, "axis values must be positive"),
            BdError::NonFinitePsnr => write!(f, "psnr values must be finite"),
            BdError::EmptyOverlap => write!(f, "curves share no psnr interval"),
        }
    }
}

impl std::error::Error for BdError {}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch-Carlson slopes
/// with the shape-preserving three-point endpoint rule).
pub(crate) struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    pub(crate) fn new(x: Vec<f64>, y: Vec<f64>) -> Pchip {
        let n = x.len();
        assert!(n >= 2);
        let h: Vec<f64> = (0..n - 1).map(|i| x[i + 1] - x[i]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            if delta[i - 1] * delta[i] <= 0.0 {
                d[i] = 0.0;
            } else {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
        d[0] = edge_slope(
            h[0],
            h.get(1).copied().unwrap_or(h[0]),
            delta[0],
            delta.get(1).copied().unwrap_or(delta[0]),
        );
        let m = n - 1;
        d[m] = edge_slope(
            h[m - 1],
            if m >= 2 { h[m - 2] } else { h[m - 1] },
            delta[m - 1],
            if m >= 2 { delta[m - 2] } else { delta[m - 1] },
        );
        Pchip { x, y, d }
    }

    pub(crate) fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        // Clamp to the fitted range; BD integration stays inside it.
        if t <= self.x[0] {
            return self.y[0] + self.d[0] * (t - self.x[0]);
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1] + self.d[n - 1] * (t - self.x[n - 1]);
        }
        let mut i = 0;
        while i + 2 < n && t >= self.x[i + 1] {
            i += 1;
        }
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y[i] + h10 * h * self.d[i] + h01 * self.y[i + 1] + h11 * h * self.d[i + 1]
    }
}

fn edge_slope(h0: f64, h1: f64, delta0: f64, delta1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * delta0 - h0 * delta1) / (h0 + h1);
    if d.signum() != delta0.signum() {
        0.0
    } else if delta0.signum() != delta1.signum() && d.abs() > 3.0 * delta0.abs() {
        3.0 * delta0
    } else {
        d
    }
}

fn curve_to_log_axis(points: &[CurvePoint], axis: BdAxis) -> Result<(Vec<f64>, Vec<f64>), BdError> {
    if points.len() < 4 {
        return Err(BdError::TooFewPoints(points.len()));
    }
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .map(|p| {
            let v = match axis {
                BdAxis::Rate => p.rate_bytes as f64,
                BdAxis::Energy => p.energy_joules,
            };
            (v, p.psnr_yuv_db)
        })
        .collect();
    if pts.iter().any(|&(v, _)| !(v > 0.0)) {
        return Err(BdError::NonPositiveAxis);
    }
    if pts.iter().any(|&(_, p)| !p.is_finite()) {
        return Err(BdError::NonFinitePsnr);
    }
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    for w in pts.windows(2) {
        if w[1].1 <= w[0].1 || w[1].0 <= w[0].0 {
            return Err(BdError::NonMonotone);
        }
    }
    let psnr: Vec<f64> = pts.iter().map(|&(_, p)| p).collect();
    let log_axis: Vec<f64> = pts.iter().map(|&(v, _)| v.log10()).collect();
    Ok((psnr, log_axis))
}

const INTEGRATION_POINTS: usize = 1000;

/// Bjontegaard delta of `test` against `reference` on the chosen axis.
/// Negative values mean the test curve needs less rate/energy at equal
/// quality.
pub fn bd_metric(
    reference: &[CurvePoint],
    test: &[CurvePoint],
    axis: BdAxis,
) -> Result<BdResult, BdError> {
    let (ref_psnr, ref_log) = curve_to_log_axis(reference, axis)?;
    let (test_psnr, test_log) = curve_to_log_axis(test, axis)?;
    let lo = ref_psnr[0].max(test_psnr[0]);
    let hi = ref_psnr[ref_psnr.len() - 1].min(test_psnr[test_psnr.len() - 1]);
    if hi <= lo {
        return Err(BdError::EmptyOverlap);
    }
    let ref_interp = Pchip::new(ref_psnr, ref_log);
    let test_interp = Pchip::new(test_psnr, test_log);
    let step = (hi - lo) / INTEGRATION_POINTS as f64;
    let gap = |t: f64| test_interp.eval(t) - ref_interp.eval(t);
    let mut integral = 0.0;
    for i in 0..INTEGRATION_POINTS {
        let a = lo + step * i as f64;
        let b = a + step;
        integral += 0.5 * (gap(a) + gap(b)) * step;
    }
    let mean_gap = integral / (hi - lo);
    Ok(BdResult {
        value_percent: 100.0 * (10f64.powf(mean_gap) - 1.0),
        axis,
        anchor_tau: reference[0].tau,
        test_tau: test[0].tau,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(vals: &[(u64, f64)], tau: f64) -> Vec<CurvePoint> {
        vals.iter()
            .map(|&(rate, psnr)| CurvePoint {
                qp: 0,
                tau,
                rate_bytes: rate,
                psnr_yuv_db: psnr,
                energy_joules: rate as f64 * 1e-6,
            })
            .collect()
    }

    fn scaled(points: &[CurvePoint], k: f64) -> Vec<CurvePoint> {
        points
            .iter()
            .map(|p| CurvePoint {
                rate_bytes: ((p.rate_bytes as f64) * k).round() as u64,
                energy_joules: p.energy_joules * k,
                ..*p
            })
            .collect()
    }

    fn base_curve() -> Vec<CurvePoint> {
        curve(
            &[(10_000, 30.5), (24_000, 34.2), (52_000, 37.9), (110_000, 41.3)],
            0.0,
        )
    }

    #[test]
    fn self_identity_is_zero() {
        let c = base_curve();
        for axis in [BdAxis::Rate, BdAxis::Energy] {
            let r = bd_metric(&c, &c, axis).unwrap();
            assert!(r.value_percent.abs() <= 1e-9, "{axis:?}: {}", r.value_percent);
        }
    }

    #[test]
    fn constant_log_shift_law() {
        let c = base_curve();
        // Energy axis scales exactly; the +10% and -20% shifts follow.
        let up = scaled(&c, 1.10);
        let r = bd_metric(&c, &up, BdAxis::Energy).unwrap();
        assert!((r.value_percent - 10.0).abs() <= 1e-6, "{}", r.value_percent);
        let down = scaled(&c, 0.8);
        let r = bd_metric(&c, &down, BdAxis::Energy).unwrap();
        assert!((r.value_percent + 20.0).abs() <= 1e-6, "{}", r.value_percent);
    }

    #[test]
    fn rate_axis_shift_with_exact_integers() {
        // Rates chosen so the 1.1x scaling stays integral.
        let c = curve(&[(10_000, 30.5), (20_000, 34.2), (50_000, 37.9), (100_000, 41.3)], 0.0);
        let up = scaled(&c, 1.10);
        let r = bd_metric(&c, &up, BdAxis::Rate).unwrap();
        assert!((r.value_percent - 10.0).abs() <= 1e-6);
    }

    #[test]
    fn sign_follows_dominance() {
        let c = base_curve();
        let worse = scaled(&c, 1.5);
        assert!(bd_metric(&c, &worse, BdAxis::Rate).unwrap().value_percent > 0.0);
        let better = scaled(&c, 0.6);
        assert!(bd_metric(&c, &better, BdAxis::Energy).unwrap().value_percent < 0.0);
    }

    #[test]
    fn input_validation() {
        let c = base_curve();
        assert!(matches!(
            bd_metric(&c[..3], &c, BdAxis::Rate),
            Err(BdError::TooFewPoints(3))
        ));
        let mut non_mono = base_curve();
        non_mono[2].psnr_yuv_db = 30.0;
        assert!(matches!(
            bd_metric(&c, &non_mono, BdAxis::Rate),
            Err(BdError::NonMonotone)
        ));
        let disjoint = curve(
            &[(10_000, 50.0), (24_000, 54.0), (52_000, 58.0), (110_000, 61.0)],
            0.2,
        );
        assert!(matches!(
            bd_metric(&c, &disjoint, BdAxis::Rate),
            Err(BdError::EmptyOverlap)
        ));
        let mut inf = base_curve();
        inf[3].psnr_yuv_db = f64::INFINITY;
        assert!(matches!(
            bd_metric(&c, &inf, BdAxis::Rate),
            Err(BdError::NonFinitePsnr)
        ));
    }

    #[test]
    fn pchip_interpolates_nodes_and_preserves_monotonicity() {
        let x = vec![0.0, 1.0, 2.5, 4.0, 5.0];
        let y = vec![0.0, 0.2, 2.0, 2.1, 3.0];
        let p = Pchip::new(x.clone(), y.clone());
        for (xi, yi) in x.iter().zip(&y) {
            assert!((p.eval(*xi) - yi).abs() < 1e-12);
        }
        let mut prev = p.eval(0.0);
        for i in 1..=500 {
            let t = 5.0 * i as f64 / 500.0;
            let v = p.eval(t);
            assert!(v >= prev - 1e-12, "overshoot at {t}");
            prev = v;
        }
    }
}

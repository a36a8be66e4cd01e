//! Specific-energy training from repeated decode timings.
//!
//! Hardware power measurement is replaced by a CPU-time proxy: each
//! training bitstream is decoded several times, the median wall-clock
//! seconds are scaled by a configurable watts constant into joules, and a
//! non-negative least-squares fit over the feature tallies yields one
//! specific energy per feature. Timing runs must not execute concurrently
//! with other heavy work, or the proxy drifts.

use std::fmt;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::codec::{decode_sequence, Bitstream, CodecError};
use crate::energy::{Feature, FeatureCounts, Provenance, SpecificEnergies, FEATURE_COUNT};

#[derive(Debug)]
pub enum CalibrateError {
    Codec(CodecError),
    NotEnoughStreams { got: usize, need: usize },
    /// Feature tallies are linearly dependent across the training set.
    RankDeficient(String),
    NonPositive(&'static str),
}

impl fmt::Display for CalibrateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CalibrateError::Codec(e) => write!(f, "{e}"),
            CalibrateError::NotEnoughStreams { got, need } => {
                write!(f, "{got} training bitstreams, need at least {need}")
            }
            CalibrateError::RankDeficient(msg) => write!(f, "rank-deficient training set: {msg}"),
            CalibrateError::NonPositive(what) => write!(f, "{what} must be positive"),
        }
    }
}

impl std::error::Error for CalibrateError {}

impl From<CodecError> for CalibrateError {
    fn from(e: CodecError) -> Self {
        CalibrateError::Codec(e)
    }
}

/// Timing threshold below which the proxy is considered unreliable.
pub const LOW_RESOLUTION_SECONDS: f64 = 0.05;

#[derive(Clone, Debug)]
pub struct CalibrationEntry {
    pub label: String,
    pub median_seconds: f64,
    pub runs: usize,
    /// Median ran under [`LOW_RESOLUTION_SECONDS`]; treat with suspicion.
    pub low_resolution: bool,
    /// `|estimate - measured| / measured` after the fit.
    pub rel_fit_error: f64,
}

#[derive(Clone, Debug)]
pub struct Calibration {
    pub energies: SpecificEnergies,
    pub entries: Vec<CalibrationEntry>,
    pub mean_rel_fit_error: f64,
}

impl Calibration {
    /// CSV with header `bitstream,median_seconds,runs`.
    pub fn log_csv(&self) -> String {
        let mut s = String::from("bitstream,median_seconds,runs\n");
        for e in &self.entries {
            s.push_str(&format!("{},{},{}\n", e.label, e.median_seconds, e.runs));
        }
        s
    }
}

/// Lawson-Hanson non-negative least squares: minimizes `|a x - b|` with
/// `x >= 0` elementwise.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut passive = vec![false; n];
    let mut x = DVector::zeros(n);
    let atb = a.transpose() * b;
    let tol = 1e-12 * atb.amax().max(1e-300);

    let solve_passive = |passive: &[bool]| -> DVector<f64> {
        let cols: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
        let ap = a.select_columns(cols.iter());
        let svd = ap.svd(true, true);
        let smax = svd.singular_values.max();
        let z = svd.solve(b, smax * 1e-13).expect("svd solve");
        let mut full = DVector::zeros(n);
        for (k, &i) in cols.iter().enumerate() {
            full[i] = z[k];
        }
        full
    };

    for _ in 0..3 * n {
        let w = a.transpose() * (b - a * &x);
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            if !passive[i] && w[i] > tol && best.is_none_or(|(_, bw)| w[i] > bw) {
                best = Some((i, w[i]));
            }
        }
        let Some((j, _)) = best else { break };
        passive[j] = true;

        loop {
            let z = solve_passive(&passive);
            let negative: Vec<usize> = (0..n).filter(|&i| passive[i] && z[i] <= 0.0).collect();
            if negative.is_empty() {
                x = z;
                break;
            }
            let mut alpha = f64::INFINITY;
            for &i in &negative {
                let denom = x[i] - z[i];
                if denom > 0.0 {
                    alpha = alpha.min(x[i] / denom);
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            for i in 0..n {
                if passive[i] {
                    x[i] += alpha * (z[i] - x[i]);
                }
            }
            for i in 0..n {
                if passive[i] && x[i] <= tol.max(1e-300) {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    x
}

/// Non-negative least-squares fit of per-feature energies against measured
/// joules. Returns the energies and the per-observation relative errors.
pub fn fit_specific_energies(
    counts: &[FeatureCounts],
    measured_joules: &[f64],
) -> Result<(SpecificEnergies, Vec<f64>), CalibrateError> {
    assert_eq!(counts.len(), measured_joules.len());
    if counts.len() < FEATURE_COUNT {
        return Err(CalibrateError::NotEnoughStreams {
            got: counts.len(),
            need: FEATURE_COUNT,
        });
    }
    let rows = counts.len();
    let mut a = DMatrix::zeros(rows, FEATURE_COUNT);
    let mut b = DVector::zeros(rows);
    for (i, c) in counts.iter().enumerate() {
        for (j, f) in Feature::ALL.iter().enumerate() {
            a[(i, j)] = c.get(*f) as f64;
        }
        b[i] = measured_joules[i];
    }
    // Column scaling improves conditioning without changing the solution.
    let mut col_scale = vec![1.0f64; FEATURE_COUNT];
    for j in 0..FEATURE_COUNT {
        let norm = a.column(j).norm();
        if norm == 0.0 {
            return Err(CalibrateError::RankDeficient(format!(
                "feature {} never occurs in the training set",
                Feature::ALL[j].name()
            )));
        }
        col_scale[j] = norm;
        for i in 0..rows {
            a[(i, j)] /= norm;
        }
    }
    let svd = a.clone().svd(false, false);
    let smax = svd.singular_values.max();
    if svd.rank(smax * 1e-10) < FEATURE_COUNT {
        return Err(CalibrateError::RankDeficient(
            "feature tallies are collinear; vary resolution, length, QP, tau, and intra period"
                .into(),
        ));
    }

    let scaled = nnls(&a, &b);
    let mut values = [0.0f64; FEATURE_COUNT];
    for j in 0..FEATURE_COUNT {
        values[j] = scaled[j] / col_scale[j];
    }
    let energies = SpecificEnergies::from_values(values, Provenance::Calibrated);
    let rel_errors: Vec<f64> = (0..rows)
        .map(|i| {
            let est = a.row(i).transpose().dot(&scaled);
            (est - b[i]).abs() / b[i].abs().max(1e-300)
        })
        .collect();
    Ok((energies, rel_errors))
}

fn median(samples: &mut [f64]) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len();
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        0.5 * (samples[n / 2 - 1] + samples[n / 2])
    }
}

/// Decodes once and returns the elapsed wall-clock seconds.
pub fn wall_clock_decode_seconds(stream: &Bitstream) -> Result<f64, CodecError> {
    let start = Instant::now();
    let decoded = decode_sequence(stream)?;
    let elapsed = start.elapsed().as_secs_f64();
    std::hint::black_box(&decoded);
    Ok(elapsed)
}

/// Trains specific energies from labeled bitstreams and a timing harness.
///
/// Each stream is decoded once for its feature tallies, timed `runs`
/// times (median taken), and the medians scaled by `watts` into joules.
pub fn calibrate_energies(
    streams: &[(String, Bitstream)],
    timer: &mut dyn FnMut(&Bitstream) -> Result<f64, CodecError>,
    runs: usize,
    watts: f64,
) -> Result<Calibration, CalibrateError> {
    if streams.len() < FEATURE_COUNT {
        return Err(CalibrateError::NotEnoughStreams {
            got: streams.len(),
            need: FEATURE_COUNT,
        });
    }
    if runs == 0 {
        return Err(CalibrateError::NonPositive("runs"));
    }
    if watts <= 0.0 {
        return Err(CalibrateError::NonPositive("watts"));
    }
    let mut counts = Vec::with_capacity(streams.len());
    let mut medians = Vec::with_capacity(streams.len());
    for (_, stream) in streams {
        let (_, c) = decode_sequence(stream)?;
        counts.push(c);
        let mut samples: Vec<f64> = (0..runs)
            .map(|_| timer(stream))
            .collect::<Result<_, _>>()?;
        medians.push(median(&mut samples));
    }
    let joules: Vec<f64> = medians.iter().map(|m| m * watts).collect();
    let (energies, rel_errors) = fit_specific_energies(&counts, &joules)?;
    let entries: Vec<CalibrationEntry> = streams
        .iter()
        .zip(medians.iter().zip(&rel_errors))
        .map(|((label, _), (&median_seconds, &rel_fit_error))| CalibrationEntry {
            label: label.clone(),
            median_seconds,
            runs,
            low_resolution: median_seconds < LOW_RESOLUTION_SECONDS,
            rel_fit_error,
        })
        .collect();
    let mean_rel_fit_error = rel_errors.iter().sum::<f64>() / rel_errors.len() as f64;
    Ok(Calibration {
        energies,
        entries,
        mean_rel_fit_error,
    })
}

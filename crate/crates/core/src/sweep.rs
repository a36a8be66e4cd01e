//! Sweep orchestration: encode every (QP, tau) cell, decode for
//! verification and feature counting, and reduce to rate-energy diagrams.
//!
//! Reported energies always come from the decoder-side feature tallies,
//! not the encoder's prediction, so the curve data is ground truth under
//! the model. Any encoder/decoder disagreement aborts the sweep.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::bd::{bd_metric, BdAxis, BdError, CurvePoint};
use crate::codec::{decode_sequence, BlockEnergyModel, CodecError, EncodeOutcome, EncoderConfig};
use crate::energy::{estimate_energy_bf, SpecificEnergies};
use crate::frame::{sequence_psnr, Frame, FrameError};
use crate::lagrange::RhoEpsilon;
use crate::optimize::{multi_qp_optimize, single_qp_optimize, OptimizeError};

#[derive(Debug)]
pub enum SweepError {
    Codec(CodecError),
    Optimize(OptimizeError),
    Frame(FrameError),
    Bd(BdError),
    Io(std::io::Error),
    /// Decoder output disagreed with the encoder's reconstruction or
    /// feature tallies.
    Integrity(String),
    MissingAnchor,
    BadConfig(String),
}

impl fmt::Display for SweepError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepError::Codec(e) => write!(f, "{e}"),
            SweepError::Optimize(e) => write!(f, "{e}"),
            SweepError::Frame(e) => write!(f, "{e}"),
            SweepError::Bd(e) => write!(f, "bd metric: {e}"),
            SweepError::Io(e) => write!(f, "i/o error: {e}"),
            SweepError::Integrity(msg) => write!(f, "sweep integrity failure: {msg}"),
            SweepError::MissingAnchor => write!(f, "tau list must contain the anchor 0"),
            SweepError::BadConfig(msg) => write!(f, "bad sweep config: {msg}"),
        }
    }
}

impl std::error::Error for SweepError {}

impl From<CodecError> for SweepError {
    fn from(e: CodecError) -> Self {
        SweepError::Codec(e)
    }
}

impl From<OptimizeError> for SweepError {
    fn from(e: OptimizeError) -> Self {
        SweepError::Optimize(e)
    }
}

impl From<FrameError> for SweepError {
    fn from(e: FrameError) -> Self {
        SweepError::Frame(e)
    }
}

impl From<BdError> for SweepError {
    fn from(e: BdError) -> Self {
        SweepError::Bd(e)
    }
}

impl From<std::io::Error> for SweepError {
    fn from(e: std::io::Error) -> Self {
        SweepError::Io(e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pipeline {
    /// One-shot encodes with a fixed QP from the trained lambda relation.
    SingleQp,
    /// Full multi-QP optimization per cell (CTU-level QP search plus the
    /// lambda rescaling loop).
    MultiQp,
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub qps: Vec<u8>,
    pub taus: Vec<f64>,
    pub pipeline: Pipeline,
    /// Number of worker threads over sweep cells.
    pub jobs: usize,
}

/// (BDR, BDDE) of one tau curve against the tau = 0 anchor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TauBd {
    pub tau: f64,
    pub bdr_percent: f64,
    pub bdde_percent: f64,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    /// One row per (tau, qp) in sweep order.
    pub points: Vec<CurvePoint>,
    /// "modeled" or "proxy-calibrated", from the energies' provenance.
    pub energy_kind: &'static str,
    pub diagram: Vec<TauBd>,
}

fn run_cell(
    frames: &[Frame],
    base: &EncoderConfig,
    energies: &SpecificEnergies,
    re: &RhoEpsilon,
    pipeline: Pipeline,
    qp: u8,
    tau: f64,
) -> Result<CurvePoint, SweepError> {
    let mut cfg = base.clone();
    cfg.qp_base = qp;
    cfg.tau = tau;
    let model = BlockEnergyModel::FeatureBased(energies.clone());
    let outcome: EncodeOutcome = match pipeline {
        Pipeline::SingleQp => single_qp_optimize(frames, &cfg, &model, re)?,
        Pipeline::MultiQp => multi_qp_optimize(frames, &cfg, &model, re)?.outcome,
    };
    let (decoded, counts) = decode_sequence(&outcome.bitstream)?;
    if decoded != outcome.stats.recon {
        return Err(SweepError::Integrity(format!(
            "reconstruction mismatch at qp {qp} tau {tau}"
        )));
    }
    if counts != outcome.stats.feature_counts {
        return Err(SweepError::Integrity(format!(
            "feature count mismatch at qp {qp} tau {tau}"
        )));
    }
    let crop = (frames[0].crop_width, frames[0].crop_height);
    let quality = sequence_psnr(frames, &decoded, crop.0, crop.1)?;
    Ok(CurvePoint {
        qp,
        tau,
        rate_bytes: outcome.bitstream.total_bytes() as u64,
        psnr_yuv_db: quality.psnr_yuv,
        energy_joules: estimate_energy_bf(&counts, energies),
    })
}

/// Encodes every (qp, tau) combination and reduces each tau curve to a
/// (BDR, BDDE) pair against the tau = 0 anchor of the same pipeline.
pub fn sweep(
    frames: &[Frame],
    base: &EncoderConfig,
    energies: &SpecificEnergies,
    re: &RhoEpsilon,
    cfg: &SweepConfig,
) -> Result<SweepResult, SweepError> {
    if cfg.qps.is_empty() || cfg.taus.is_empty() {
        return Err(SweepError::BadConfig("empty qp or tau list".into()));
    }
    if !cfg.taus.contains(&0.0) {
        return Err(SweepError::MissingAnchor);
    }
    let cells: Vec<(f64, u8)> = cfg
        .taus
        .iter()
        .flat_map(|&tau| cfg.qps.iter().map(move |&qp| (tau, qp)))
        .collect();

    let jobs = cfg.jobs.max(1).min(cells.len());
    let results: Mutex<Vec<Option<Result<CurvePoint, SweepError>>>> =
        Mutex::new((0..cells.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= cells.len() {
                    break;
                }
                let (tau, qp) = cells[i];
                let r = run_cell(frames, base, energies, re, cfg.pipeline, qp, tau);
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    let mut points = Vec::with_capacity(cells.len());
    for slot in results.into_inner().unwrap() {
        points.push(slot.expect("all cells ran")?);
    }

    let anchor: Vec<CurvePoint> = points
        .iter()
        .filter(|p| p.tau == 0.0 && p.psnr_yuv_db.is_finite())
        .copied()
        .collect();
    let mut diagram = Vec::with_capacity(cfg.taus.len());
    for &tau in &cfg.taus {
        let curve: Vec<CurvePoint> = points
            .iter()
            .filter(|p| p.tau == tau && p.psnr_yuv_db.is_finite())
            .copied()
            .collect();
        let bdr = bd_metric(&anchor, &curve, BdAxis::Rate)?;
        let bdde = bd_metric(&anchor, &curve, BdAxis::Energy)?;
        diagram.push(TauBd {
            tau,
            bdr_percent: bdr.value_percent,
            bdde_percent: bdde.value_percent,
        });
    }
    Ok(SweepResult {
        points,
        energy_kind: energies.provenance.energy_kind(),
        diagram,
    })
}

pub const CURVES_HEADER: &str = "qp,tau,rate_bytes,psnr_yuv_db,energy_joules,energy_kind";
pub const DIAGRAM_HEADER: &str = "tau,bdr_percent,bdde_percent";

pub fn curves_csv(points: &[CurvePoint], energy_kind: &str) -> String {
    let mut s = String::from(CURVES_HEADER);
    s.push('\n');
    for p in points {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.qp, p.tau, p.rate_bytes, p.psnr_yuv_db, p.energy_joules, energy_kind
        ));
    }
    s
}

/// Parses a curves CSV back into points plus the energy-kind column.
pub fn parse_curves_csv(csv: &str) -> Result<Vec<(CurvePoint, String)>, String> {
    let mut lines = csv.lines();
    match lines.next() {
        Some(h) if h.trim() == CURVES_HEADER => {}
        other => return Err(format!("expected header '{CURVES_HEADER}', got {other:?}")),
    }
    let mut out = Vec::new();
    for line in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 6 {
            return Err(format!("bad row: {line}"));
        }
        out.push((
            CurvePoint {
                qp: parts[0].parse().map_err(|e| format!("bad qp: {e}"))?,
                tau: parts[1].parse().map_err(|e| format!("bad tau: {e}"))?,
                rate_bytes: parts[2].parse().map_err(|e| format!("bad rate: {e}"))?,
                psnr_yuv_db: parts[3].parse().map_err(|e| format!("bad psnr: {e}"))?,
                energy_joules: parts[4].parse().map_err(|e| format!("bad energy: {e}"))?,
            },
            parts[5].to_string(),
        ));
    }
    Ok(out)
}

pub fn diagram_csv(diagram: &[TauBd]) -> String {
    let mut s = String::from(DIAGRAM_HEADER);
    s.push('\n');
    for d in diagram {
        s.push_str(&format!("{},{},{}\n", d.tau, d.bdr_percent, d.bdde_percent));
    }
    s
}

/// Writes the curves CSV, the rate-energy diagram CSV, and a deterministic
/// three-panel SVG next to them. Returns the written paths.
pub fn emit_report(result: &SweepResult, out_prefix: &Path) -> Result<Vec<PathBuf>, SweepError> {
    let prefix = out_prefix.to_string_lossy();
    let curves_path = PathBuf::from(format!("{prefix}_curves.csv"));
    let diagram_path = PathBuf::from(format!("{prefix}_diagram.csv"));
    let svg_path = PathBuf::from(format!("{prefix}.svg"));
    std::fs::write(&curves_path, curves_csv(&result.points, result.energy_kind))?;
    std::fs::write(&diagram_path, diagram_csv(&result.diagram))?;
    std::fs::write(&svg_path, render_svg(result))?;
    Ok(vec![curves_path, diagram_path, svg_path])
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

struct Panel {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
}

impl Panel {
    fn map(&self, x: f64, y: f64, xr: (f64, f64), yr: (f64, f64)) -> (f64, f64) {
        let sx = if xr.1 > xr.0 { (x - xr.0) / (xr.1 - xr.0) } else { 0.5 };
        let sy = if yr.1 > yr.0 { (y - yr.0) / (yr.1 - yr.0) } else { 0.5 };
        (self.x0 + sx * self.w, self.y0 + self.h - sy * self.h)
    }
}

fn range_of(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn render_svg(result: &SweepResult) -> String {
    let mut taus: Vec<f64> = result.points.iter().map(|p| p.tau).collect();
    taus.sort_by(|a, b| a.partial_cmp(b).unwrap());
    taus.dedup();

    let mut svg = String::new();
    svg.push_str(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"1080\" height=\"340\" \
         viewBox=\"0 0 1080 340\" font-family=\"monospace\" font-size=\"11\">\n",
    );
    svg.push_str("<rect width=\"1080\" height=\"340\" fill=\"white\"/>\n");

    let finite: Vec<&CurvePoint> = result
        .points
        .iter()
        .filter(|p| p.psnr_yuv_db.is_finite())
        .collect();
    let psnr_range = range_of(finite.iter().map(|p| p.psnr_yuv_db));
    let rate_range = range_of(finite.iter().map(|p| (p.rate_bytes as f64).log10()));
    let energy_range = range_of(finite.iter().map(|p| p.energy_joules.log10()));

    let panels = [
        (Panel { x0: 50.0, y0: 30.0, w: 280.0, h: 250.0 }, "log10 rate [bytes]"),
        (Panel { x0: 400.0, y0: 30.0, w: 280.0, h: 250.0 }, "log10 energy [J]"),
        (Panel { x0: 750.0, y0: 30.0, w: 280.0, h: 250.0 }, "BDR [%]"),
    ];
    for (panel, label) in &panels {
        svg.push_str(&format!(
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"black\"/>\n",
            panel.x0, panel.y0, panel.w, panel.h
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{label}</text>\n",
            panel.x0 + panel.w / 2.0,
            panel.y0 + panel.h + 30.0
        ));
    }
    svg.push_str("<text x=\"20\" y=\"20\">PSNR-YUV [dB] vs rate</text>\n");
    svg.push_str("<text x=\"370\" y=\"20\">PSNR-YUV [dB] vs energy</text>\n");
    svg.push_str(&format!(
        "<text x=\"720\" y=\"20\">BDDE [%] vs BDR [%] ({})</text>\n",
        result.energy_kind
    ));

    for (panel_idx, axis) in [(0usize, 0usize), (1, 1)] {
        let (panel, _) = &panels[panel_idx];
        for (ti, &tau) in taus.iter().enumerate() {
            let color = PALETTE[ti % PALETTE.len()];
            let mut pts: Vec<(f64, f64)> = finite
                .iter()
                .filter(|p| p.tau == tau)
                .map(|p| {
                    let x = if axis == 0 {
                        (p.rate_bytes as f64).log10()
                    } else {
                        p.energy_joules.log10()
                    };
                    (x, p.psnr_yuv_db)
                })
                .collect();
            pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let xr = if axis == 0 { rate_range } else { energy_range };
            let path: Vec<String> = pts
                .iter()
                .map(|&(x, y)| {
                    let (px, py) = panel.map(x, y, xr, psnr_range);
                    format!("{px:.2},{py:.2}")
                })
                .collect();
            if path.len() > 1 {
                svg.push_str(&format!(
                    "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
                    path.join(" ")
                ));
            }
            for p in &path {
                let (px, py) = p.split_once(',').unwrap();
                svg.push_str(&format!(
                    "<circle cx=\"{px}\" cy=\"{py}\" r=\"2.5\" fill=\"{color}\"/>\n"
                ));
            }
        }
    }

    // Rate-energy diagram panel.
    let (panel, _) = &panels[2];
    let bdr_range = range_of(result.diagram.iter().map(|d| d.bdr_percent));
    let bdde_range = range_of(result.diagram.iter().map(|d| d.bdde_percent));
    let path: Vec<String> = result
        .diagram
        .iter()
        .map(|d| {
            let (px, py) = panel.map(d.bdr_percent, d.bdde_percent, bdr_range, bdde_range);
            format!("{px:.2},{py:.2}")
        })
        .collect();
    if path.len() > 1 {
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\"/>\n",
            path.join(" ")
        ));
    }
    for (d, p) in result.diagram.iter().zip(&path) {
        let (px, py) = p.split_once(',').unwrap();
        svg.push_str(&format!(
            "<circle cx=\"{px}\" cy=\"{py}\" r=\"3\" fill=\"#d62728\"/>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\">t={}</text>\n",
            px.parse::<f64>().unwrap() + 5.0,
            py.parse::<f64>().unwrap() - 5.0,
            d.tau
        ));
    }

    // Legend of tau values.
    for (ti, &tau) in taus.iter().enumerate() {
        let color = PALETTE[ti % PALETTE.len()];
        let y = 315.0;
        let x = 50.0 + 90.0 * ti as f64;
        svg.push_str(&format!(
            "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"12\" height=\"12\" fill=\"{color}\"/>\n",
            y - 10.0
        ));
        svg.push_str(&format!("<text x=\"{:.1}\" y=\"{y:.1}\">tau={tau}</text>\n", x + 16.0));
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_result() -> SweepResult {
        let mk = |qp: u8, tau: f64, rate: u64, psnr: f64, energy: f64| CurvePoint {
            qp,
            tau,
            rate_bytes: rate,
            psnr_yuv_db: psnr,
            energy_joules: energy,
        };
        SweepResult {
            points: vec![
                mk(37, 0.0, 1000, 30.0, 0.010),
                mk(32, 0.0, 2200, 33.5, 0.018),
                mk(27, 0.0, 5000, 37.0, 0.033),
                mk(22, 0.0, 11500, 40.5, 0.060),
                mk(37, 0.5, 1300, 29.5, 0.008),
                mk(32, 0.5, 2900, 33.0, 0.014),
                mk(27, 0.5, 6500, 36.5, 0.026),
                mk(22, 0.5, 15000, 40.0, 0.047),
            ],
            energy_kind: "modeled",
            diagram: vec![
                TauBd { tau: 0.0, bdr_percent: 0.0, bdde_percent: 0.0 },
                TauBd { tau: 0.5, bdr_percent: 31.0, bdde_percent: -21.0 },
            ],
        }
    }

    #[test]
    fn curves_csv_round_trips() {
        let r = sample_result();
        let csv = curves_csv(&r.points, r.energy_kind);
        assert!(csv.starts_with(CURVES_HEADER));
        let parsed = parse_curves_csv(&csv).unwrap();
        assert_eq!(parsed.len(), r.points.len());
        for ((p, kind), q) in parsed.iter().zip(&r.points) {
            assert_eq!(p, q);
            assert_eq!(kind, "modeled");
        }
        // Single-row table stays valid.
        let one = curves_csv(&r.points[..1], "modeled");
        assert_eq!(parse_curves_csv(&one).unwrap().len(), 1);
    }

    #[test]
    fn svg_is_deterministic() {
        let r = sample_result();
        let a = render_svg(&r);
        let b = render_svg(&r);
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.contains("polyline"));
    }

    #[test]
    fn emit_report_writes_three_files() {
        let r = sample_result();
        let dir = tempfile::tempdir().unwrap();
        let prefix = dir.path().join("report");
        let paths = emit_report(&r, &prefix).unwrap();
        assert_eq!(paths.len(), 3);
        for p in &paths {
            assert!(p.exists(), "{p:?}");
        }
        // Identical input twice -> byte-identical SVG.
        let svg1 = std::fs::read(&paths[2]).unwrap();
        emit_report(&r, &prefix).unwrap();
        let svg2 = std::fs::read(&paths[2]).unwrap();
        assert_eq!(svg1, svg2);
    }
}

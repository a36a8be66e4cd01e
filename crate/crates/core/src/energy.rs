//! Decoding-energy estimation from bit-stream features and from high-level
//! sequence parameters, plus least-squares training for both models.
//!
//! The feature model assigns each countable decoder sub-process (a block
//! reconstruction at a given quadtree depth, an inverse transform, a
//! fractional-pel interpolation, ...) a specific energy `e_f`; a bitstream's
//! estimated decoding energy is `sum_f n_f * e_f` over its feature tallies.

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

#[derive(Debug)]
pub enum EnergyError {
    Io(std::io::Error),
    /// CSV did not parse or did not cover the feature set exactly once.
    BadCsv(String),
    /// Too few observations for the number of model parameters.
    Underdetermined { rows: usize, needed: usize },
    /// Regressors are collinear; parameters cannot be identified.
    RankDeficient(String),
    NonPositive(&'static str),
}

impl fmt::Display for EnergyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnergyError::Io(e) => write!(f, "i/o error: {e}"),
            EnergyError::BadCsv(msg) => write!(f, "bad csv: {msg}"),
            EnergyError::Underdetermined { rows, needed } => {
                write!(f, "underdetermined fit: {rows} observations, need {needed}")
            }
            EnergyError::RankDeficient(msg) => write!(f, "rank-deficient design: {msg}"),
            EnergyError::NonPositive(what) => write!(f, "{what} must be positive"),
        }
    }
}

impl std::error::Error for EnergyError {}

impl From<std::io::Error> for EnergyError {
    fn from(e: std::io::Error) -> Self {
        EnergyError::Io(e)
    }
}

/// Quadtree depths used by the codec: 16x16, 8x8, 4x4 blocks.
pub const DEPTHS: usize = 3;

/// The fixed bit-stream feature set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Feature {
    /// Constant per-sequence offset (always counted once).
    Offset,
    FrameIntra,
    FrameInter,
    IntraBlkD0,
    IntraBlkD1,
    IntraBlkD2,
    SkipBlkD0,
    SkipBlkD1,
    SkipBlkD2,
    InterBlkD0,
    InterBlkD1,
    InterBlkD2,
    /// Fractional-pel interpolations (one per inter block with an odd
    /// half-pel motion component).
    Fracpel,
    /// Nonzero transform coefficients.
    Coeffs,
    /// Summed integer log-magnitudes of nonzero coefficients.
    Val,
    TransD0,
    TransD1,
    TransD2,
}

pub const FEATURE_COUNT: usize = 18;

impl Feature {
    pub const ALL: [Feature; FEATURE_COUNT] = [
        Feature::Offset,
        Feature::FrameIntra,
        Feature::FrameInter,
        Feature::IntraBlkD0,
        Feature::IntraBlkD1,
        Feature::IntraBlkD2,
        Feature::SkipBlkD0,
        Feature::SkipBlkD1,
        Feature::SkipBlkD2,
        Feature::InterBlkD0,
        Feature::InterBlkD1,
        Feature::InterBlkD2,
        Feature::Fracpel,
        Feature::Coeffs,
        Feature::Val,
        Feature::TransD0,
        Feature::TransD1,
        Feature::TransD2,
    ];

    pub fn index(self) -> usize {
        Feature::ALL.iter().position(|&f| f == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        match self {
            Feature::Offset => "offset",
            Feature::FrameIntra => "frame_intra",
            Feature::FrameInter => "frame_inter",
            Feature::IntraBlkD0 => "intra_blk_d0",
            Feature::IntraBlkD1 => "intra_blk_d1",
            Feature::IntraBlkD2 => "intra_blk_d2",
            Feature::SkipBlkD0 => "skip_blk_d0",
            Feature::SkipBlkD1 => "skip_blk_d1",
            Feature::SkipBlkD2 => "skip_blk_d2",
            Feature::InterBlkD0 => "inter_blk_d0",
            Feature::InterBlkD1 => "inter_blk_d1",
            Feature::InterBlkD2 => "inter_blk_d2",
            Feature::Fracpel => "fracpel",
            Feature::Coeffs => "coeffs",
            Feature::Val => "val",
            Feature::TransD0 => "trans_d0",
            Feature::TransD1 => "trans_d1",
            Feature::TransD2 => "trans_d2",
        }
    }

    pub fn from_name(name: &str) -> Option<Feature> {
        Feature::ALL.iter().copied().find(|f| f.name() == name)
    }

    pub fn intra_blk(depth: usize) -> Feature {
        [Feature::IntraBlkD0, Feature::IntraBlkD1, Feature::IntraBlkD2][depth]
    }

    pub fn skip_blk(depth: usize) -> Feature {
        [Feature::SkipBlkD0, Feature::SkipBlkD1, Feature::SkipBlkD2][depth]
    }

    pub fn inter_blk(depth: usize) -> Feature {
        [Feature::InterBlkD0, Feature::InterBlkD1, Feature::InterBlkD2][depth]
    }

    pub fn trans(depth: usize) -> Feature {
        [Feature::TransD0, Feature::TransD1, Feature::TransD2][depth]
    }
}

/// Per-feature occurrence tally for a bitstream or a block.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FeatureCounts {
    counts: [u64; FEATURE_COUNT],
}

impl FeatureCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, f: Feature) -> u64 {
        self.counts[f.index()]
    }

    pub fn add(&mut self, f: Feature, n: u64) {
        self.counts[f.index()] += n;
    }

    pub fn iter(&self) -> impl Iterator<Item = (Feature, u64)> + '_ {
        Feature::ALL.iter().map(move |&f| (f, self.counts[f.index()]))
    }

    pub fn as_array(&self) -> &[u64; FEATURE_COUNT] {
        &self.counts
    }

    pub fn from_array(counts: [u64; FEATURE_COUNT]) -> Self {
        FeatureCounts { counts }
    }

    /// Structural consistency for a decoded sequence: one offset, frame
    /// tallies summing to the frame count, and quadtree leaf areas covering
    /// every frame exactly.
    pub fn validate(&self, width: usize, height: usize, frames: usize) -> Result<(), String> {
        if self.get(Feature::Offset) != 1 {
            return Err(format!("offset count {} != 1", self.get(Feature::Offset)));
        }
        let fi = self.get(Feature::FrameIntra);
        let fp = self.get(Feature::FrameInter);
        if fi + fp != frames as u64 {
            return Err(format!("frame features {fi}+{fp} != {frames}"));
        }
        let mut area = 0u64;
        for depth in 0..DEPTHS {
            let size = (16 >> depth) as u64;
            let blocks = self.get(Feature::intra_blk(depth))
                + self.get(Feature::skip_blk(depth))
                + self.get(Feature::inter_blk(depth));
            area += blocks * size * size;
        }
        let expected = (width * height * frames) as u64;
        if area != expected {
            return Err(format!("leaf area {area} != {expected}"));
        }
        Ok(())
    }
}

/// Provenance of a set of specific energies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    /// Trained from decoder timings on this machine (proxy joules).
    Calibrated,
    /// The built-in synthetic defaults.
    Synthetic,
    /// Loaded from a user-provided file.
    File,
}

impl Provenance {
    /// Label used in reports: calibrated energies are a time proxy, all
    /// others are model values.
    pub fn energy_kind(self) -> &'static str {
        match self {
            Provenance::Calibrated => "proxy-calibrated",
            Provenance::Synthetic | Provenance::File => "modeled",
        }
    }
}

/// One specific energy `e_f` (joules) per feature.
#[derive(Clone, Debug, PartialEq)]
pub struct SpecificEnergies {
    values: [f64; FEATURE_COUNT],
    pub provenance: Provenance,
}

impl SpecificEnergies {
    pub fn from_values(values: [f64; FEATURE_COUNT], provenance: Provenance) -> Self {
        SpecificEnergies { values, provenance }
    }

    /// Deterministic defaults for tests and demos. Fractional-pel
    /// interpolation and the inverse transforms carry the largest values,
    /// so they dominate the rate-energy trade-off.
    pub fn synthetic_default() -> Self {
        let mut values = [0.0; FEATURE_COUNT];
        let mut set = |f: Feature, v: f64| values[f.index()] = v;
        set(Feature::Offset, 1.0e-3);
        set(Feature::FrameIntra, 2.0e-4);
        set(Feature::FrameInter, 1.0e-4);
        set(Feature::IntraBlkD0, 4.0e-6);
        set(Feature::IntraBlkD1, 1.5e-6);
        set(Feature::IntraBlkD2, 6.0e-7);
        set(Feature::SkipBlkD0, 8.0e-7);
        set(Feature::SkipBlkD1, 3.0e-7);
        set(Feature::SkipBlkD2, 1.2e-7);
        set(Feature::InterBlkD0, 2.0e-6);
        set(Feature::InterBlkD1, 8.0e-7);
        set(Feature::InterBlkD2, 3.5e-7);
        set(Feature::Fracpel, 8.0e-6);
        set(Feature::Coeffs, 5.0e-8);
        set(Feature::Val, 2.0e-8);
        set(Feature::TransD0, 1.2e-5);
        set(Feature::TransD1, 4.0e-6);
        set(Feature::TransD2, 1.5e-6);
        SpecificEnergies {
            values,
            provenance: Provenance::Synthetic,
        }
    }

    pub fn get(&self, f: Feature) -> f64 {
        self.values[f.index()]
    }

    pub fn set(&mut self, f: Feature, v: f64) {
        self.values[f.index()] = v;
    }

    /// CSV with header `feature,energy_joules`, one row per feature.
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("feature,energy_joules\n");
        for f in Feature::ALL {
            s.push_str(&format!("{},{}\n", f.name(), self.values[f.index()]));
        }
        s
    }

    pub fn from_csv_str(csv: &str) -> Result<Self, EnergyError> {
        let mut values = [f64::NAN; FEATURE_COUNT];
        let mut seen = [false; FEATURE_COUNT];
        let mut lines = csv.lines();
        match lines.next() {
            Some(h) if h.trim() == "feature,energy_joules" => {}
            other => {
                return Err(EnergyError::BadCsv(format!(
                    "expected header 'feature,energy_joules', got {other:?}"
                )))
            }
        }
        for line in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (name, value) = line
                .split_once(',')
                .ok_or_else(|| EnergyError::BadCsv(format!("bad row: {line}")))?;
            let f = Feature::from_name(name.trim())
                .ok_or_else(|| EnergyError::BadCsv(format!("unknown feature: {name}")))?;
            if seen[f.index()] {
                return Err(EnergyError::BadCsv(format!("duplicate feature: {name}")));
            }
            seen[f.index()] = true;
            values[f.index()] = value
                .trim()
                .parse::<f64>()
                .map_err(|e| EnergyError::BadCsv(format!("bad energy for {name}: {e}")))?;
        }
        if let Some(missing) = Feature::ALL.iter().find(|f| !seen[f.index()]) {
            return Err(EnergyError::BadCsv(format!(
                "missing feature: {}",
                missing.name()
            )));
        }
        Ok(SpecificEnergies {
            values,
            provenance: Provenance::File,
        })
    }

    pub fn load_csv(path: &Path) -> Result<Self, EnergyError> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), EnergyError> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}

/// Bit-stream-feature estimate: `sum_f n_f * e_f`.
pub fn estimate_energy_bf(counts: &FeatureCounts, energies: &SpecificEnergies) -> f64 {
    Feature::ALL
        .iter()
        .map(|&f| counts.get(f) as f64 * energies.get(f))
        .sum()
}

/// Block class used for per-block feature selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockClass {
    Intra,
    Skip,
    Inter,
}

impl BlockClass {
    pub fn block_feature(self, depth: usize) -> Feature {
        match self {
            BlockClass::Intra => Feature::intra_blk(depth),
            BlockClass::Skip => Feature::skip_blk(depth),
            BlockClass::Inter => Feature::inter_blk(depth),
        }
    }
}

/// Integer log-magnitude weight of one nonzero coefficient level:
/// `1 + floor(log2(|level|))`.
pub fn coeff_val_weight(level: i32) -> u64 {
    debug_assert!(level != 0);
    1 + u64::from(level.unsigned_abs().ilog2())
}

/// Energy the decoder will spend on one block, from the features that
/// block exercises: the mode/depth block feature, plus (for a coded
/// residual) one transform at the block's depth and the coefficient
/// count/value terms, plus any fractional-pel interpolation events.
pub fn estimate_block_energy(
    energies: &SpecificEnergies,
    class: BlockClass,
    depth: usize,
    coded: bool,
    nonzero_levels: &[i32],
    fracpel_events: u64,
) -> f64 {
    let mut e = energies.get(class.block_feature(depth));
    if coded {
        e += energies.get(Feature::trans(depth));
        e += nonzero_levels.len() as f64 * energies.get(Feature::Coeffs);
        let val: u64 = nonzero_levels.iter().map(|&l| coeff_val_weight(l)).sum();
        e += val as f64 * energies.get(Feature::Val);
    }
    e + fracpel_events as f64 * energies.get(Feature::Fracpel)
}

/// High-level model constants (per-pixel joule domain).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HlParams {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

impl HlParams {
    /// CSV with header `c1,c2,c3,c4` and a single value row.
    pub fn to_csv_string(&self) -> String {
        format!("c1,c2,c3,c4\n{},{},{},{}\n", self.c1, self.c2, self.c3, self.c4)
    }

    pub fn from_csv_str(csv: &str) -> Result<Self, EnergyError> {
        let mut lines = csv.lines();
        match lines.next() {
            Some(h) if h.trim() == "c1,c2,c3,c4" => {}
            other => {
                return Err(EnergyError::BadCsv(format!(
                    "expected header 'c1,c2,c3,c4', got {other:?}"
                )))
            }
        }
        let row = lines
            .find(|l| !l.trim().is_empty())
            .ok_or_else(|| EnergyError::BadCsv("missing value row".into()))?;
        let vals: Vec<f64> = row
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| EnergyError::BadCsv(format!("bad value: {e}")))?;
        if vals.len() != 4 {
            return Err(EnergyError::BadCsv(format!("expected 4 values, got {}", vals.len())));
        }
        Ok(HlParams {
            c1: vals[0],
            c2: vals[1],
            c3: vals[2],
            c4: vals[3],
        })
    }

    pub fn load_csv(path: &Path) -> Result<Self, EnergyError> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), EnergyError> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}

/// High-level sequence-energy estimate from the byte count `bytes`, frame
/// count `frames`, pixels per frame `pixels`, and intra-frame fraction
/// `p_intra`:
/// `(c1*p_I*B/(N*S) + c2*p_I + c3*B/(N*S) + c4) * N * S`.
pub fn estimate_energy_hl(
    bytes: f64,
    frames: f64,
    pixels: f64,
    p_intra: f64,
    params: &HlParams,
) -> Result<f64, EnergyError> {
    if frames <= 0.0 {
        return Err(EnergyError::NonPositive("frame count"));
    }
    if pixels <= 0.0 {
        return Err(EnergyError::NonPositive("pixels per frame"));
    }
    let r = bytes / (frames * pixels);
    Ok((params.c1 * p_intra * r + params.c2 * p_intra + params.c3 * r + params.c4)
        * frames
        * pixels)
}

/// One training observation for the high-level model.
#[derive(Clone, Copy, Debug)]
pub struct HlObservation {
    pub bytes: f64,
    pub frames: f64,
    pub pixels: f64,
    pub p_intra: f64,
    pub energy_joules: f64,
}

/// Ordinary least squares on the per-pixel regressors
/// `{p_I * B/(NS), p_I, B/(NS), 1}`. Returns the fitted constants and the
/// per-pixel residual 2-norm.
pub fn fit_hl_params(observations: &[HlObservation]) -> Result<(HlParams, f64), EnergyError> {
    if observations.len() < 4 {
        return Err(EnergyError::Underdetermined {
            rows: observations.len(),
            needed: 4,
        });
    }
    for o in observations {
        if o.frames <= 0.0 {
            return Err(EnergyError::NonPositive("frame count"));
        }
        if o.pixels <= 0.0 {
            return Err(EnergyError::NonPositive("pixels per frame"));
        }
    }
    let distinct = |vals: Vec<f64>| {
        let mut v = vals;
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300));
        v.len()
    };
    if distinct(observations.iter().map(|o| o.p_intra).collect()) < 2 {
        return Err(EnergyError::RankDeficient(
            "all observations share one p_intra".into(),
        ));
    }
    if distinct(
        observations
            .iter()
            .map(|o| o.bytes / (o.frames * o.pixels))
            .collect(),
    ) < 2
    {
        return Err(EnergyError::RankDeficient(
            "all observations share one bytes-per-pixel value".into(),
        ));
    }

    let rows = observations.len();
    let mut a = DMatrix::zeros(rows, 4);
    let mut b = DVector::zeros(rows);
    for (i, o) in observations.iter().enumerate() {
        let r = o.bytes / (o.frames * o.pixels);
        a[(i, 0)] = o.p_intra * r;
        a[(i, 1)] = o.p_intra;
        a[(i, 2)] = r;
        a[(i, 3)] = 1.0;
        b[i] = o.energy_joules / (o.frames * o.pixels);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if svd.rank(smax * 1e-10) < 4 {
        return Err(EnergyError::RankDeficient(
            "regressors are collinear".into(),
        ));
    }
    let x = svd
        .solve(&b, smax * 1e-12)
        .map_err(|e| EnergyError::RankDeficient(e.to_string()))?;
    let residual = (&a * &x - &b).norm();
    Ok((
        HlParams {
            c1: x[0],
            c2: x[1],
            c3: x[2],
            c4: x[3],
        },
        residual,
    ))
}

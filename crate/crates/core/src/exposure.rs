//! Inaccuracy-exposure model.
//!
//! The probability that the element `offset` steps after a sparse label is no
//! longer part of the event follows an exponential decay, `1 - exp(-alpha *
//! offset * L)`, where `L` is the number of frames per element (1 for
//! element-wise sequences). Averaging that probability over the `N` elements
//! sampled after each label gives the expected fraction of mislabeled
//! positives a model is trained on.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExposureParams {
    alpha: f64,
    segment_len: u32,
}

impl ExposureParams {
    pub fn new(alpha: f64, segment_len: u32) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
        }
        if segment_len == 0 {
            return Err(Error::invalid("segment length must be at least 1"));
        }
        Ok(Self { alpha, segment_len })
    }

    /// Element-wise sequences (`L = 1`).
    pub fn elementwise(alpha: f64) -> Result<Self> {
        Self::new(alpha, 1)
    }

    /// Builds parameters from an expected event duration using the half-life
    /// calibration `alpha = ln 2 / E(M)`.
    ///
    /// When the duration is given in elements and `segment_len > 1`, the
    /// returned alpha is per frame, so that `alpha * L` is per element.
    pub fn calibrated(expected_duration: f64, unit: DurationUnit, segment_len: u32) -> Result<Self> {
        let alpha = calibrate_alpha(expected_duration, unit)?;
        let per_frame = match unit {
            DurationUnit::Frame => alpha,
            DurationUnit::Element => alpha / f64::from(segment_len.max(1)),
        };
        Self::new(per_frame, segment_len)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn segment_len(&self) -> u32 {
        self.segment_len
    }

    /// Decay per sampled element, `alpha * L`.
    pub fn rate_per_element(&self) -> f64 {
        self.alpha * f64::from(self.segment_len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DurationUnit {
    Element,
    Frame,
}

/// Per-label sample counts `N_t` for a set of independent sparse labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    counts: Vec<u32>,
}

impl LabelSet {
    pub fn new(counts: Vec<u32>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::invalid("label set must contain at least one label"));
        }
        if let Some(pos) = counts.iter().position(|&c| c == 0) {
            return Err(Error::invalid(format!("label {pos} samples zero elements")));
        }
        Ok(Self { counts })
    }

    pub fn uniform(labels: usize, count: u32) -> Result<Self> {
        Self::new(vec![count; labels])
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Probability that the element `offset` positions after the label is mislabeled.
pub fn mislabel_prob(params: &ExposureParams, offset: u64) -> f64 {
    // 1 - e^{-x} without cancellation for small x
    -(-params.rate_per_element() * offset as f64).exp_m1()
}

/// Expected mislabeled fraction when `risk_level` elements follow each label.
pub fn exposure(params: &ExposureParams, risk_level: u32) -> f64 {
    assert!(risk_level >= 1, "risk level must be at least 1");
    let rate = params.rate_per_element();
    let survival: f64 = (0..risk_level).map(|n| (-rate * f64::from(n)).exp()).sum();
    1.0 - survival / f64::from(risk_level)
}

/// Exposure averaged over labels that each sampled their own number of elements.
pub fn exposure_multi(params: &ExposureParams, labels: &LabelSet) -> f64 {
    // group equal counts so that uniform sets reduce to `exposure` bit-for-bit
    let mut groups: BTreeMap<u32, usize> = BTreeMap::new();
    for &n in &labels.counts {
        *groups.entry(n).or_default() += 1;
    }
    let total = labels.len() as f64;
    groups
        .into_iter()
        .map(|(n, k)| (k as f64 / total) * exposure(params, n))
        .sum()
}

/// Half-life calibration: `ln 2 / E(M)`, expressed per `unit`.
pub fn calibrate_alpha(expected_duration: f64, unit: DurationUnit) -> Result<f64> {
    let _ = unit;
    if !(expected_duration.is_finite() && expected_duration > 0.0) {
        return Err(Error::invalid(format!(
            "expected duration must be positive, got {expected_duration}"
        )));
    }
    Ok(std::f64::consts::LN_2 / expected_duration)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExposureRow {
    pub alpha: f64,
    pub segment_len: u32,
    pub risk_level: u32,
    pub exposure: f64,
}

/// Exact exposure for `N = 1..=n_max` at every grid point, grid order first.
pub fn exposure_curve(grid: &[ExposureParams], n_max: u32) -> Result<Vec<ExposureRow>> {
    if n_max == 0 {
        return Err(Error::invalid("n_max must be at least 1"));
    }
    let mut rows = Vec::with_capacity(grid.len() * n_max as usize);
    for params in grid {
        for n in 1..=n_max {
            rows.push(ExposureRow {
                alpha: params.alpha,
                segment_len: params.segment_len,
                risk_level: n,
                exposure: exposure(params, n),
            });
        }
    }
    Ok(rows)
}

pub const EXPOSURE_CSV_HEADER: &str = "alpha,L,N,exposure";

/// CSV text for an exposure curve. Floats use the shortest representation
/// that parses back to the same value.
pub fn exposure_csv(rows: &[ExposureRow]) -> String {
    let mut out = String::from(EXPOSURE_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.alpha, r.segment_len, r.risk_level, r.exposure);
    }
    out
}

pub fn write_exposure_csv(path: &Path, rows: &[ExposureRow]) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(exposure_csv(rows).as_bytes())
        .map_err(|e| Error::io(path, e))
}

pub fn parse_exposure_csv(text: &str) -> Result<Vec<ExposureRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == EXPOSURE_CSV_HEADER => {}
        _ => return Err(Error::format("exposure csv", 0, "missing header")),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = || Error::format("exposure csv", (i + 1) as u64, format!("bad row `{line}`"));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(bad());
        }
        rows.push(ExposureRow {
            alpha: f[0].parse().map_err(|_| bad())?,
            segment_len: f[1].parse().map_err(|_| bad())?,
            risk_level: f[2].parse().map_err(|_| bad())?,
            exposure: f[3].parse().map_err(|_| bad())?,
        });
    }
    Ok(rows)
}

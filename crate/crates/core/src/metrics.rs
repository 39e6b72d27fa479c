//! Binary classification metrics with bootstrap confidence intervals.
//!
//! Conventions:
//! - a sample is predicted positive iff `score >= threshold`;
//! - precision is 1 when nothing is predicted positive;
//! - recall is 1 when there are no positives and none are predicted, 0 when
//!   there are no positives but some are predicted;
//! - average precision uses step interpolation over descending scores, with
//!   tied scores processed as one block;
//! - AUC is the Mann-Whitney statistic with ties counted as one half.

use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSet {
    scores: Vec<f64>,
    labels: Vec<bool>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::invalid("scored set must not be empty"));
        }
        if scores.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} scores but {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::invalid("scores contain NaN"));
        }
        Ok(Self { scores, labels })
    }

    /// Labels given as 0/1 integers.
    pub fn from_binary(scores: Vec<f64>, labels: &[u8]) -> Result<Self> {
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::invalid(format!("label {bad} is not binary")));
        }
        Self::new(scores, labels.iter().map(|&l| l == 1).collect())
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    /// Subset picked by `indices` (repeats allowed).
    pub fn resample(&self, indices: &[usize]) -> Self {
        Self {
            scores: indices.iter().map(|&i| self.scores[i]).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn threshold_metrics(set: &ScoredSet, threshold: f64) -> ThresholdMetrics {
    let (mut tp, mut fp, mut pos) = (0usize, 0usize, 0usize);
    for (&s, &l) in set.scores.iter().zip(&set.labels) {
        let predicted = s >= threshold;
        pos += usize::from(l);
        tp += usize::from(predicted && l);
        fp += usize::from(predicted && !l);
    }
    let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = match (pos, tp + fp) {
        (0, 0) => 1.0,
        (0, _) => 0.0,
        _ => tp as f64 / pos as f64,
    };
    ThresholdMetrics {
        precision,
        recall,
        f1: f1_score(precision, recall),
    }
}

/// Harmonic mean, 0 when both inputs are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Indices sorted by descending score, grouped into blocks of equal score.
fn descending_blocks(set: &ScoredSet) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.sort_by(|&a, &b| set.scores[b].total_cmp(&set.scores[a]));
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let s = set.scores[order[i]];
        let (mut p, mut n) = (0, 0);
        while i < order.len() && set.scores[order[i]] == s {
            if set.labels[order[i]] {
                p += 1;
            } else {
                n += 1;
            }
            i += 1;
        }
        blocks.push((p, n));
    }
    blocks
}

pub fn average_precision(set: &ScoredSet) -> Result<f64> {
    let total_pos = set.positives();
    if total_pos == 0 {
        return Err(Error::UndefinedMetric("average precision needs at least one positive".into()));
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    // sum of precision weighted by positives gained, divided once
    let mut weighted = 0.0;
    for (p, n) in descending_blocks(set) {
        tp += p;
        fp += n;
        if p > 0 {
            weighted += p as f64 * (tp as f64 / (tp + fp) as f64);
        }
    }
    Ok(weighted / total_pos as f64)
}

pub fn auc(set: &ScoredSet) -> Result<f64> {
    let total_pos = set.positives();
    let total_neg = set.len() - total_pos;
    if total_pos == 0 || total_neg == 0 {
        return Err(Error::UndefinedMetric("AUC needs both classes".into()));
    }
    // twice the Mann-Whitney U, kept integral so ties stay exact
    let mut blocks = descending_blocks(set);
    blocks.reverse();
    let (mut neg_below, mut twice_u) = (0u128, 0u128);
    for (p, n) in blocks {
        twice_u += 2 * p as u128 * neg_below + p as u128 * n as u128;
        neg_below += n as u128;
    }
    Ok(twice_u as f64 / (2 * total_pos as u128 * total_neg as u128) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Precision,
    Recall,
    F1,
    AveragePrecision,
    Auc,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Precision,
        Metric::Recall,
        Metric::F1,
        Metric::AveragePrecision,
        Metric::Auc,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Precision => "precision",
            Metric::Recall => "recall",
            Metric::F1 => "f1",
            Metric::AveragePrecision => "average_precision",
            Metric::Auc => "auc",
        }
    }

    pub fn evaluate(&self, set: &ScoredSet, threshold: f64) -> Result<f64> {
        match self {
            Metric::Precision => Ok(threshold_metrics(set, threshold).precision),
            Metric::Recall => Ok(threshold_metrics(set, threshold).recall),
            Metric::F1 => Ok(threshold_metrics(set, threshold).f1),
            Metric::AveragePrecision => average_precision(set),
            Metric::Auc => auc(set),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceInterval {
    pub lo: f64,
    pub hi: f64,
    /// Resamples skipped because the statistic was undefined on them.
    pub skipped: usize,
}

/// Percentile bootstrap over `n` resampling units.
///
/// `statistic` receives the resampled indices and returns `None` when the
/// statistic is undefined on that resample.
pub fn bootstrap_with<R, F>(
    rng: &mut R,
    n: usize,
    resamples: usize,
    level: f64,
    mut statistic: F,
) -> Result<ConfidenceInterval>
where
    R: Rng + ?Sized,
    F: FnMut(&[usize]) -> Option<f64>,
{
    if n == 0 || resamples == 0 {
        return Err(Error::invalid("bootstrap needs data and at least one resample"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("confidence level {level} outside (0, 1)")));
    }
    let mut values = Vec::with_capacity(resamples);
    let mut idx = vec![0usize; n];
    for _ in 0..resamples {
        for slot in idx.iter_mut() {
            *slot = rng.random_range(0..n);
        }
        if let Some(v) = statistic(&idx) {
            values.push(v);
        }
    }
    let skipped = resamples - values.len();
    if values.is_empty() || skipped * 2 > resamples {
        return Err(Error::Degenerate(format!(
            "{skipped} of {resamples} bootstrap resamples were undefined"
        )));
    }
    values.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok(ConfidenceInterval {
        lo: percentile_sorted(&values, tail),
        hi: percentile_sorted(&values, 1.0 - tail),
        skipped,
    })
}

pub fn bootstrap_ci<R: Rng + ?Sized>(
    rng: &mut R,
    set: &ScoredSet,
    metric: Metric,
    threshold: f64,
    resamples: usize,
    level: f64,
) -> Result<ConfidenceInterval> {
    bootstrap_with(rng, set.len(), resamples, level, |idx| {
        metric.evaluate(&set.resample(idx), threshold).ok()
    })
}

/// Bootstrap interval of the mean of `values` (e.g. per-run metric values).
pub fn bootstrap_mean_ci<R: Rng + ?Sized>(
    rng: &mut R,
    values: &[f64],
    resamples: usize,
    level: f64,
) -> Result<ConfidenceInterval> {
    bootstrap_with(rng, values.len(), resamples, level, |idx| {
        Some(idx.iter().map(|&i| values[i]).sum::<f64>() / idx.len() as f64)
    })
}

/// Linear interpolation between order statistics at rank `q * (n - 1)`.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let rank = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid("pearson needs two equal-length series of at least 2 values"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedMetric("pearson correlation of a constant series".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub average_precision: f64,
    pub auc: f64,
    /// Per-metric bootstrap intervals, in [`Metric::ALL`] order when present.
    pub intervals: Option<Vec<ConfidenceInterval>>,
}

impl EvalReport {
    pub fn compute(set: &ScoredSet, threshold: f64) -> Result<Self> {
        let t = threshold_metrics(set, threshold);
        Ok(Self {
            threshold,
            precision: t.precision,
            recall: t.recall,
            f1: t.f1,
            average_precision: average_precision(set)?,
            auc: auc(set)?,
            intervals: None,
        })
    }

    pub fn with_intervals<R: Rng + ?Sized>(
        mut self,
        rng: &mut R,
        set: &ScoredSet,
        resamples: usize,
        level: f64,
    ) -> Result<Self> {
        let intervals = Metric::ALL
            .iter()
            .map(|m| bootstrap_ci(rng, set, *m, self.threshold, resamples, level))
            .collect::<Result<Vec<_>>>()?;
        self.intervals = Some(intervals);
        Ok(self)
    }

    pub fn value(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Precision => self.precision,
            Metric::Recall => self.recall,
            Metric::F1 => self.f1,
            Metric::AveragePrecision => self.average_precision,
            Metric::Auc => self.auc,
        }
    }

    /// CSV with header `metric,value,ci_lo,ci_hi`; interval cells are empty when absent.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value,ci_lo,ci_hi\n");
        for (i, m) in Metric::ALL.iter().enumerate() {
            let (lo, hi) = match &self.intervals {
                Some(ci) => (ci[i].lo.to_string(), ci[i].hi.to_string()),
                None => (String::new(), String::new()),
            };
            let _ = writeln!(out, "{},{},{},{}", m.name(), self.value(*m), lo, hi);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    fn set(scores: &[f64], labels: &[u8]) -> ScoredSet {
        ScoredSet::from_binary(scores.to_vec(), labels).unwrap()
    }

    #[test]
    fn threshold_examples() {
        let t = threshold_metrics(&set(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]), 0.5);
        assert_eq!((t.precision, t.recall, t.f1), (1.0, 1.0, 1.0));

        let t = threshold_metrics(&set(&[0.1, 0.2, 0.3], &[1, 0, 1]), 0.5);
        assert_eq!((t.precision, t.recall, t.f1), (1.0, 0.0, 0.0));

        let t = threshold_metrics(&set(&[0.9, 0.6, 0.4, 0.2], &[1, 0, 1, 0]), 0.5);
        assert_eq!((t.precision, t.recall, t.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn recall_conventions_without_positives() {
        let s = set(&[0.1, 0.2], &[0, 0]);
        assert_eq!(threshold_metrics(&s, 0.5).recall, 1.0);
        assert_eq!(threshold_metrics(&s, 0.15).recall, 0.0);
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&set(&[0.9, 0.8, 0.3, 0.1], &[1, 1, 0, 0])).unwrap(), 1.0);
        let ap = average_precision(&set(&[0.9, 0.8, 0.7], &[0, 1, 1])).unwrap();
        assert!((ap - (0.5 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(average_precision(&set(&[0.3, 0.9, 0.1], &[1, 1, 1])).unwrap(), 1.0);
        assert!(matches!(
            average_precision(&set(&[0.3], &[0])),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn ap_tie_block_is_order_independent() {
        let a = average_precision(&set(&[0.5, 0.5, 0.5, 0.1], &[1, 0, 1, 0])).unwrap();
        let b = average_precision(&set(&[0.5, 0.5, 0.5, 0.1], &[0, 1, 1, 0])).unwrap();
        assert_eq!(a, b);
        assert!((a - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&set(&[0.7, 0.3], &[1, 0])).unwrap(), 1.0);
        assert_eq!(auc(&set(&[0.4, 0.4, 0.4], &[1, 0, 1])).unwrap(), 0.5);
        assert_eq!(auc(&set(&[0.9, 0.5, 0.5, 0.1], &[1, 1, 0, 0])).unwrap(), 0.875);
        assert!(auc(&set(&[0.9, 0.5], &[1, 1])).is_err());
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0, 4.5];
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        let y: Vec<f64> = x.iter().map(|v| -2.0 * v + 3.0).collect();
        assert!((pearson(&x, &y).unwrap() + 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(pearson(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::UndefinedMetric(_))));
        assert!(pearson(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn bootstrap_constant_metric() {
        let s = set(&[0.1, 0.7, 0.3, 0.5], &[1, 1, 1, 1]);
        let ci = bootstrap_ci(&mut rng_from_seed(1), &s, Metric::AveragePrecision, 0.5, 500, 0.95).unwrap();
        assert_eq!((ci.lo, ci.hi, ci.skipped), (1.0, 1.0, 0));
    }

    #[test]
    fn bootstrap_is_seed_deterministic() {
        let s = set(&[0.9, 0.2, 0.65, 0.4, 0.8, 0.1], &[1, 0, 1, 0, 0, 1]);
        let a = bootstrap_ci(&mut rng_from_seed(9), &s, Metric::Auc, 0.5, 300, 0.95).unwrap();
        let b = bootstrap_ci(&mut rng_from_seed(9), &s, Metric::Auc, 0.5, 300, 0.95).unwrap();
        assert_eq!(a.lo.to_bits(), b.lo.to_bits());
        assert_eq!(a.hi.to_bits(), b.hi.to_bits());
        assert!(a.skipped > 0);
    }

    #[test]
    fn bootstrap_degenerate_input() {
        // single-class data: AUC undefined on every resample
        let s = set(&[0.1, 0.4, 0.3], &[1, 1, 1]);
        let err = bootstrap_ci(&mut rng_from_seed(2), &s, Metric::Auc, 0.5, 200, 0.95).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn bootstrap_interval_contains_estimate() {
        let mut rng = rng_from_seed(3);
        for _ in 0..100 {
            let n = rng.random_range(30..80);
            let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
            let scores: Vec<f64> = labels
                .iter()
                .map(|&l| rng.random::<f64>() + if l { 0.4 } else { 0.0 })
                .collect();
            let s = ScoredSet::new(scores, labels).unwrap();
            let Ok(point) = auc(&s) else { continue };
            let ci = bootstrap_ci(&mut rng, &s, Metric::Auc, 0.5, 400, 0.95).unwrap();
            assert!(ci.lo <= point && point <= ci.hi, "{point} not in [{}, {}]", ci.lo, ci.hi);
        }
    }

    #[test]
    fn report_csv_layout() {
        let s = set(&[0.9, 0.2, 0.6, 0.4], &[1, 0, 1, 0]);
        let report = EvalReport::compute(&s, 0.5).unwrap();
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "metric,value,ci_lo,ci_hi");
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[4], "average_precision,1,,");
        let with = report.with_intervals(&mut rng_from_seed(4), &s, 100, 0.95).unwrap();
        assert!(with.to_csv().lines().nth(5).unwrap().starts_with("auc,1,"));
    }

    #[test]
    fn percentile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile_sorted(&v, 0.0), 1.0);
        assert_eq!(percentile_sorted(&v, 1.0), 5.0);
        assert_eq!(percentile_sorted(&v, 0.5), 3.0);
        assert!((percentile_sorted(&v, 0.01) - 1.04).abs() < 1e-12);
    }
}

//! Sequence construction, risk-level labeling and negative sampling.
//!
//! A [`LabeledSequence`] holds an event of `M` consecutive positive elements
//! starting at the sparse label `l`. Training only sees `l`: the `N` elements
//! starting at `l` are labeled positive ([`apply_risk_labels`]), so `N - M`
//! of them are negatives carrying a positive label whenever `N > M`.

mod experiment;
mod idx;
mod pools;

pub use experiment::{
    build_image_experiment, manifest_csv, ImageExperiment, ImageExperimentConfig, ManifestRow,
    SplitName, TrainingSet, MANIFEST_CSV_HEADER,
};
pub use idx::{load_idx, parse_idx, write_idx, IdxArray};
pub use pools::{
    add_gaussian_noise, orientation_probe, make_synthetic_pools, preprocess_pool, SyntheticPoolConfig,
};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One image-like element of a sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    /// Stable identifier of the pool entry the element was drawn from.
    pub id: String,
    /// `[H, W]` single-channel values.
    pub features: Tensor,
    pub true_class: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence {
    pub elements: Vec<Element>,
    pub event_start: usize,
    pub event_len: usize,
}

impl LabeledSequence {
    pub fn new(elements: Vec<Element>, event_start: usize, event_len: usize) -> Result<Self> {
        if event_start + event_len > elements.len() {
            return Err(Error::invalid(format!(
                "event [{event_start}, {}) exceeds sequence of length {}",
                event_start + event_len,
                elements.len()
            )));
        }
        let seq = Self {
            elements,
            event_start,
            event_len,
        };
        if let Some(i) = (0..seq.len()).find(|&i| seq.elements[i].true_class != seq.true_label(i)) {
            return Err(Error::invalid(format!(
                "element {i} class disagrees with the event span"
            )));
        }
        Ok(seq)
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Ground truth `y_n`: positive iff `l <= n < l + M`.
    pub fn true_label(&self, index: usize) -> bool {
        index >= self.event_start && index < self.event_start + self.event_len
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SampleSource {
    RiskPositive,
    PreLabelNegative,
    FarNegative,
    DirectNegative,
}

impl SampleSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            SampleSource::RiskPositive => "risk_positive",
            SampleSource::PreLabelNegative => "pre_label_negative",
            SampleSource::FarNegative => "far_negative",
            SampleSource::DirectNegative => "direct_negative",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "risk_positive" => SampleSource::RiskPositive,
            "pre_label_negative" => SampleSource::PreLabelNegative,
            "far_negative" => SampleSource::FarNegative,
            "direct_negative" => SampleSource::DirectNegative,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub element: Element,
    pub assigned_label: bool,
    pub true_label: bool,
    pub source: SampleSource,
    /// Position in the parent sequence, `None` for direct negatives.
    pub index_in_seq: Option<usize>,
}

impl TrainingSample {
    pub fn mislabeled(&self) -> bool {
        self.assigned_label != self.true_label
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventStart {
    Fixed(usize),
    /// `l` uniform over every start that keeps the event inside the sequence.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceSpec {
    pub seq_len: usize,
    pub m_lo: usize,
    pub m_hi: usize,
    pub event_start: EventStart,
}

impl SequenceSpec {
    /// Ten elements, `M ~ U{0..=10}`, event at the start of the sequence.
    pub fn image_default() -> Self {
        Self {
            seq_len: 10,
            m_lo: 0,
            m_hi: 10,
            event_start: EventStart::Fixed(0),
        }
    }

    pub fn fixed_len(seq_len: usize, m: usize) -> Self {
        Self {
            seq_len,
            m_lo: m,
            m_hi: m,
            event_start: EventStart::Fixed(0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seq_len == 0 {
            return Err(Error::invalid("sequence length must be positive"));
        }
        if self.m_lo > self.m_hi || self.m_hi > self.seq_len {
            return Err(Error::invalid(format!(
                "need 0 <= m_lo <= m_hi <= seq_len, got [{}, {}] with seq_len {}",
                self.m_lo, self.m_hi, self.seq_len
            )));
        }
        if let EventStart::Fixed(l) = self.event_start {
            if l + self.m_hi > self.seq_len {
                return Err(Error::invalid(format!(
                    "event start {l} leaves no room for M = {}",
                    self.m_hi
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NegativeRules {
    /// Minimum distance from the sparse label for "far" negatives.
    pub far_gap: usize,
    pub allow_pre_label: bool,
}

/// What to do when `l + N` runs past the end of a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClipPolicy {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskLabeling {
    pub samples: Vec<TrainingSample>,
    /// Number of requested positions dropped in lenient mode.
    pub clipped: usize,
}

pub fn make_sequence<R: Rng + ?Sized>(
    rng: &mut R,
    spec: &SequenceSpec,
    pos_pool: &[Element],
    neg_pool: &[Element],
) -> Result<LabeledSequence> {
    spec.validate()?;
    if pos_pool.is_empty() || neg_pool.is_empty() {
        return Err(Error::invalid("element pools must be non-empty"));
    }
    let m = rng.random_range(spec.m_lo..=spec.m_hi);
    let l = match spec.event_start {
        EventStart::Fixed(l) => l,
        EventStart::Uniform => rng.random_range(0..=spec.seq_len - m),
    };
    let elements = (0..spec.seq_len)
        .map(|n| {
            let positive = n >= l && n < l + m;
            let pool = if positive { pos_pool } else { neg_pool };
            let mut e = pool[rng.random_range(0..pool.len())].clone();
            e.true_class = positive;
            e
        })
        .collect();
    LabeledSequence::new(elements, l, m)
}

/// Labels the `risk_level` elements starting at the sparse label as positive.
pub fn apply_risk_labels(
    seq: &LabeledSequence,
    risk_level: usize,
    policy: ClipPolicy,
) -> Result<RiskLabeling> {
    if risk_level == 0 {
        return Err(Error::invalid("risk level must be at least 1"));
    }
    let available = seq.len() - seq.event_start;
    let take = match policy {
        ClipPolicy::Strict if risk_level > available => {
            return Err(Error::invalid(format!(
                "risk level {risk_level} exceeds the {available} elements after the label"
            )))
        }
        _ => risk_level.min(available),
    };
    let samples = (seq.event_start..seq.event_start + take)
        .map(|n| TrainingSample {
            element: seq.elements[n].clone(),
            assigned_label: true,
            true_label: seq.true_label(n),
            source: SampleSource::RiskPositive,
            index_in_seq: Some(n),
        })
        .collect();
    Ok(RiskLabeling {
        samples,
        clipped: risk_level - take,
    })
}

/// Number of false positives introduced when `N` elements are labeled for an event of length `M`.
pub fn count_false_positives(event_len: usize, risk_level: usize) -> usize {
    risk_level.saturating_sub(event_len)
}

/// Draws `count` negatives (with replacement) from the positions before the
/// label and from those at least `far_gap` after it.
pub fn sample_negatives<R: Rng + ?Sized>(
    rng: &mut R,
    seq: &LabeledSequence,
    rules: &NegativeRules,
    count: usize,
) -> Result<Vec<TrainingSample>> {
    let l = seq.event_start;
    let mut eligible: Vec<(usize, SampleSource)> = Vec::new();
    if rules.allow_pre_label {
        eligible.extend((0..l).map(|n| (n, SampleSource::PreLabelNegative)));
    }
    eligible.extend((l.saturating_add(rules.far_gap)..seq.len()).map(|n| (n, SampleSource::FarNegative)));
    if eligible.is_empty() {
        return Err(Error::invalid(format!(
            "no eligible negative positions (label {l}, far gap {}, length {})",
            rules.far_gap,
            seq.len()
        )));
    }
    Ok((0..count)
        .map(|_| {
            let (n, source) = eligible[rng.random_range(0..eligible.len())];
            TrainingSample {
                element: seq.elements[n].clone(),
                assigned_label: false,
                true_label: seq.true_label(n),
                source,
                index_in_seq: Some(n),
            }
        })
        .collect())
}

/// Indices for one balanced epoch: every minority-class index plus an equal
/// number of majority indices drawn without replacement, shuffled.
pub fn balanced_epoch<R: Rng + ?Sized>(rng: &mut R, labels: &[bool]) -> Vec<usize> {
    let (mut pos, mut neg): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| labels[i]);
    let keep = pos.len().min(neg.len());
    if keep == 0 {
        // single-class data: nothing to balance against
        let mut all: Vec<usize> = (0..labels.len()).collect();
        all.shuffle(rng);
        return all;
    }
    pos.shuffle(rng);
    neg.shuffle(rng);
    pos.truncate(keep);
    neg.truncate(keep);
    let mut epoch: Vec<usize> = pos.into_iter().chain(neg).collect();
    epoch.shuffle(rng);
    epoch
}

//! Train/validation/test construction for the image-sequence experiments.

use std::fmt::Write as _;

use rand::seq::IndexedRandom;

use super::{apply_risk_labels, make_sequence, ClipPolicy, Element, SampleSource, SequenceSpec, TrainingSample};
use crate::error::{Error, Result};
use crate::seed::substream;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageExperimentConfig {
    pub risk_level: usize,
    /// Sequences per split (train and validation each get this many).
    pub n_sequences: usize,
    pub sequence: SequenceSpec,
    /// Negatives drawn straight from the negative pool, per split.
    pub direct_negatives: usize,
    pub clip: ClipPolicy,
}

impl ImageExperimentConfig {
    pub fn with_risk(risk_level: usize) -> Self {
        Self {
            risk_level,
            n_sequences: 50,
            sequence: SequenceSpec::image_default(),
            direct_negatives: 50,
            clip: ClipPolicy::Strict,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl SplitName {
    pub fn as_str(&self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub samples: Vec<TrainingSample>,
    /// Parent sequence of each sample, `None` for direct negatives.
    pub seq_ids: Vec<Option<usize>>,
    /// `(M, l)` of every sequence, for ground-truth accounting.
    pub events: Vec<(usize, usize)>,
}

impl TrainingSet {
    pub fn risk_positives(&self) -> usize {
        self.samples
            .iter()
            .filter(|s| s.source == SampleSource::RiskPositive)
            .count()
    }

    /// Fraction of risk positives whose true label is negative.
    pub fn mislabeled_fraction(&self) -> f64 {
        let risk: Vec<&TrainingSample> = self
            .samples
            .iter()
            .filter(|s| s.source == SampleSource::RiskPositive)
            .collect();
        if risk.is_empty() {
            return 0.0;
        }
        risk.iter().filter(|s| s.mislabeled()).count() as f64 / risk.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageExperiment {
    pub train: TrainingSet,
    pub val: TrainingSet,
    pub test: Vec<Element>,
}

/// Builds the train and validation sets from disjoint halves of the training
/// pools and keeps the test pools aside with their true labels.
///
/// Train and validation draws use the `"train"` and `"val"` substreams of
/// `seed`. All elements are min-max rescaled per image.
pub fn build_image_experiment(
    seed: u64,
    config: &ImageExperimentConfig,
    train_pos: &[Element],
    train_neg: &[Element],
    test: &[Element],
) -> Result<ImageExperiment> {
    config.sequence.validate()?;
    if train_pos.len() < 2 || train_neg.len() < 2 {
        return Err(Error::invalid(format!(
            "training pools too small to split into train and validation ({} positives, {} negatives)",
            train_pos.len(),
            train_neg.len()
        )));
    }
    if test.is_empty() {
        return Err(Error::invalid("test pool is empty"));
    }
    let (pos_a, pos_b) = train_pos.split_at(train_pos.len() / 2);
    let (neg_a, neg_b) = train_neg.split_at(train_neg.len() / 2);
    let train = build_split(seed, "train", config, pos_a, neg_a)?;
    let val = build_split(seed, "val", config, pos_b, neg_b)?;
    let test = test
        .iter()
        .map(|e| Element {
            features: e.features.min_max_rescaled(),
            ..e.clone()
        })
        .collect();
    Ok(ImageExperiment { train, val, test })
}

fn build_split(
    seed: u64,
    tag: &str,
    config: &ImageExperimentConfig,
    pos: &[Element],
    neg: &[Element],
) -> Result<TrainingSet> {
    if neg.len() < config.direct_negatives {
        return Err(Error::invalid(format!(
            "{tag} negative pool holds {} elements, {} direct negatives requested",
            neg.len(),
            config.direct_negatives
        )));
    }
    let mut rng = substream(seed, 0, 0, tag);
    let mut samples = Vec::new();
    let mut seq_ids = Vec::new();
    let mut events = Vec::with_capacity(config.n_sequences);
    for seq_id in 0..config.n_sequences {
        let seq = make_sequence(&mut rng, &config.sequence, pos, neg)?;
        events.push((seq.event_len, seq.event_start));
        let labeling = apply_risk_labels(&seq, config.risk_level, config.clip)?;
        for s in labeling.samples {
            samples.push(s);
            seq_ids.push(Some(seq_id));
        }
    }
    for e in neg.choose_multiple(&mut rng, config.direct_negatives) {
        samples.push(TrainingSample {
            element: e.clone(),
            assigned_label: false,
            true_label: false,
            source: SampleSource::DirectNegative,
            index_in_seq: None,
        });
        seq_ids.push(None);
    }
    for s in &mut samples {
        s.element.features = s.element.features.min_max_rescaled();
    }
    Ok(TrainingSet {
        samples,
        seq_ids,
        events,
    })
}

pub const MANIFEST_CSV_HEADER: &str =
    "sample_id,split,source,assigned_label,true_label,seq_id,index_in_seq";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub sample_id: String,
    pub split: String,
    pub source: String,
    pub assigned_label: bool,
    pub true_label: bool,
    pub seq_id: Option<usize>,
    pub index_in_seq: Option<usize>,
}

impl ManifestRow {
    pub fn from_set(split: SplitName, set: &TrainingSet) -> Vec<Self> {
        set.samples
            .iter()
            .zip(&set.seq_ids)
            .map(|(s, seq_id)| ManifestRow {
                sample_id: s.element.id.clone(),
                split: split.as_str().into(),
                source: s.source.as_str().into(),
                assigned_label: s.assigned_label,
                true_label: s.true_label,
                seq_id: *seq_id,
                index_in_seq: s.index_in_seq,
            })
            .collect()
    }

    pub fn from_test(test: &[Element]) -> Vec<Self> {
        test.iter()
            .map(|e| ManifestRow {
                sample_id: e.id.clone(),
                split: "test".into(),
                source: "test".into(),
                assigned_label: e.true_class,
                true_label: e.true_class,
                seq_id: None,
                index_in_seq: None,
            })
            .collect()
    }

    pub fn parse_csv(text: &str) -> Result<Vec<Self>> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(MANIFEST_CSV_HEADER) {
            return Err(Error::format("manifest", 0, "missing manifest header"));
        }
        let opt = |s: &str| -> std::result::Result<Option<usize>, std::num::ParseIntError> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some)
            }
        };
        lines
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, line)| {
                let bad = || Error::format("manifest", (i + 1) as u64, format!("bad row `{line}`"));
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 7 {
                    return Err(bad());
                }
                Ok(ManifestRow {
                    sample_id: f[0].into(),
                    split: f[1].into(),
                    source: f[2].into(),
                    assigned_label: f[3] == "1",
                    true_label: f[4] == "1",
                    seq_id: opt(f[5]).map_err(|_| bad())?,
                    index_in_seq: opt(f[6]).map_err(|_| bad())?,
                })
            })
            .collect()
    }
}

pub fn manifest_csv(rows: &[ManifestRow]) -> String {
    let mut out = String::from(MANIFEST_CSV_HEADER);
    out.push('\n');
    let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.sample_id,
            r.split,
            r.source,
            u8::from(r.assigned_label),
            u8::from(r.true_label),
            opt(r.seq_id),
            opt(r.index_in_seq)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::count_false_positives;
    use crate::tensor::Tensor;

    fn pool(tag: &str, n: usize, positive: bool) -> Vec<Element> {
        (0..n)
            .map(|i| Element {
                id: format!("{tag}/{i}"),
                features: Tensor::new(vec![2, 2], vec![i as f64, 0.0, 1.0, 3.0]).unwrap(),
                true_class: positive,
            })
            .collect()
    }

    fn build(n: usize, seed: u64) -> ImageExperiment {
        let test: Vec<Element> = pool("test/pos", 10, true).into_iter().chain(pool("test/neg", 10, false)).collect();
        build_image_experiment(
            seed,
            &ImageExperimentConfig::with_risk(n),
            &pool("pos", 200, true),
            &pool("neg", 200, false),
            &test,
        )
        .unwrap()
    }

    #[test]
    fn conservative_split_sizes() {
        let exp = build(1, 1);
        for set in [&exp.train, &exp.val] {
            assert_eq!(set.risk_positives(), 50);
            assert_eq!(set.samples.len(), 100);
            let direct = set.samples.iter().filter(|s| s.source == SampleSource::DirectNegative).count();
            assert_eq!(direct, 50);
        }
    }

    #[test]
    fn high_risk_split_sizes() {
        let exp = build(9, 1);
        assert_eq!(exp.train.risk_positives(), 450);
        assert_eq!(exp.val.risk_positives(), 450);
    }

    #[test]
    fn splits_use_disjoint_pool_halves() {
        let exp = build(3, 2);
        let ids = |set: &TrainingSet| -> std::collections::HashSet<String> {
            set.samples.iter().map(|s| s.element.id.clone()).collect()
        };
        assert!(ids(&exp.train).is_disjoint(&ids(&exp.val)));
    }

    #[test]
    fn exact_expected_mislabel_fraction() {
        // E_M[max(0, N - M)] / N over M uniform on 0..=10
        let expected = |n: usize| (0..=10).map(|m| count_false_positives(m, n)).sum::<usize>() as f64 / (11 * n) as f64;
        assert!((expected(9) - 45.0 / 99.0).abs() < 1e-15);
        assert!((expected(3) - 6.0 / 33.0).abs() < 1e-15);
    }

    #[test]
    fn builds_are_deterministic_and_rescaled() {
        assert_eq!(build(4, 7), build(4, 7));
        let exp = build(4, 7);
        for s in &exp.train.samples {
            let d = s.element.features.data();
            assert!(d.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn insufficient_pools_are_errors() {
        let cfg = ImageExperimentConfig::with_risk(1);
        let test = pool("t", 2, true);
        assert!(build_image_experiment(0, &cfg, &pool("p", 1, true), &pool("n", 200, false), &test).is_err());
        // 60 negatives split in half cannot supply 50 direct negatives per split
        assert!(build_image_experiment(0, &cfg, &pool("p", 20, true), &pool("n", 60, false), &test).is_err());
        assert!(build_image_experiment(0, &cfg, &pool("p", 20, true), &pool("n", 200, false), &[]).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let exp = build(2, 3);
        let mut rows = ManifestRow::from_set(SplitName::Train, &exp.train);
        rows.extend(ManifestRow::from_test(&exp.test));
        let text = manifest_csv(&rows);
        assert!(text.starts_with(MANIFEST_CSV_HEADER));
        assert_eq!(ManifestRow::parse_csv(&text).unwrap(), rows);
    }
}

//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exposure::ExposureParams;
use crate::net::{ConvNetConfig, Schedule, TwoStageSchedule};
use crate::sampler::{ClipPolicy, EventStart, ImageExperimentConfig, SequenceSpec, SyntheticPoolConfig};
use crate::seed::sha256_hex;
use crate::xcorr::SyntheticVideoConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    SyntheticSeq,
    #[serde(rename = "mnist_1v0")]
    Mnist1v0,
    XcorrDemo,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::SyntheticSeq => "synthetic_seq",
            ExperimentKind::Mnist1v0 => "mnist_1v0",
            ExperimentKind::XcorrDemo => "xcorr_demo",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Risk levels swept, each in `1..=9`.
    #[serde(default = "default_risk_levels")]
    pub risk_levels: Vec<usize>,
    /// Independent runs per risk level.
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub model: ModelSection,
    /// Training schedule (the pretraining stage in two-stage runs).
    #[serde(default)]
    pub schedule: Schedule,
    /// Schedule for fine-tuning from a checkpoint or pretrained model.
    #[serde(default = "Schedule::finetune")]
    pub finetune: Schedule,
    #[serde(default)]
    pub sequence: SequenceSection,
    #[serde(default)]
    pub synthetic: SyntheticPoolConfig,
    #[serde(default)]
    pub mnist: MnistSection,
    #[serde(default)]
    pub xcorr: XcorrSection,
    #[serde(default)]
    pub exposure: ExposureSection,
    #[serde(default)]
    pub evaluation: EvaluationSection,
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

fn default_risk_levels() -> Vec<usize> {
    (1..=9).collect()
}

fn default_runs() -> usize {
    10
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub block1_filters: usize,
    pub block2_filters: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let c = ConvNetConfig::new(8, 8);
        Self {
            block1_filters: c.block1_filters,
            block2_filters: c.block2_filters,
        }
    }
}

impl ModelSection {
    pub fn net(&self, input_h: usize, input_w: usize) -> ConvNetConfig {
        ConvNetConfig::new(input_h, input_w).with_filters(self.block1_filters, self.block2_filters)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceSection {
    /// Sequences per split.
    pub n_sequences: usize,
    pub seq_len: usize,
    pub m_lo: usize,
    pub m_hi: usize,
    /// Sparse label position; ignored when `uniform_start` is set.
    pub event_start: usize,
    pub uniform_start: bool,
    /// Negatives drawn directly from the negative pool, per split.
    pub direct_negatives: usize,
    /// Clip risk labels at the sequence end instead of failing.
    pub lenient_clip: bool,
}

impl Default for SequenceSection {
    fn default() -> Self {
        Self {
            n_sequences: 50,
            seq_len: 10,
            m_lo: 0,
            m_hi: 10,
            event_start: 0,
            uniform_start: false,
            direct_negatives: 50,
            lenient_clip: false,
        }
    }
}

impl SequenceSection {
    pub fn experiment(&self, risk_level: usize) -> ImageExperimentConfig {
        ImageExperimentConfig {
            risk_level,
            n_sequences: self.n_sequences,
            sequence: SequenceSpec {
                seq_len: self.seq_len,
                m_lo: self.m_lo,
                m_hi: self.m_hi,
                event_start: if self.uniform_start {
                    EventStart::Uniform
                } else {
                    EventStart::Fixed(self.event_start)
                },
            },
            direct_negatives: self.direct_negatives,
            clip: if self.lenient_clip {
                ClipPolicy::Lenient
            } else {
                ClipPolicy::Strict
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MnistSection {
    /// Directory holding the four standard IDX files.
    pub dir: Option<PathBuf>,
    pub positive_digit: u8,
    pub negative_digit: u8,
    pub noise_mean: f64,
    pub noise_std: f64,
}

impl Default for MnistSection {
    fn default() -> Self {
        Self {
            dir: None,
            positive_digit: 1,
            negative_digit: 0,
            noise_mean: 1.0,
            noise_std: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct XcorrSection {
    pub video: SyntheticVideoConfig,
    /// Labelled events in the training and test streams.
    pub train_events: usize,
    pub test_events: usize,
    /// Event length range in segments.
    pub event_segments_lo: usize,
    pub event_segments_hi: usize,
    /// Background segments between consecutive events.
    pub gap_segments: usize,
    /// Minimum distance of weak negatives from any label, in seconds.
    pub far_gap_seconds: f64,
    pub risk_level: usize,
    /// Strongly labelled segments per class for training and validation.
    pub strong_train: usize,
    pub strong_val: usize,
    /// Negatives per positive when fine-tuning.
    pub negative_ratio: usize,
    /// Half-width of the diagonal band used by the saliency statistic.
    pub saliency_band: usize,
}

impl Default for XcorrSection {
    fn default() -> Self {
        Self {
            video: SyntheticVideoConfig::default(),
            train_events: 40,
            test_events: 20,
            event_segments_lo: 1,
            event_segments_hi: 4,
            gap_segments: 10,
            far_gap_seconds: 5.0,
            risk_level: 3,
            strong_train: 30,
            strong_val: 15,
            negative_ratio: 10,
            saliency_band: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExposureSection {
    pub alphas: Vec<f64>,
    pub segment_lens: Vec<u32>,
    pub n_max: u32,
}

impl Default for ExposureSection {
    fn default() -> Self {
        Self {
            alphas: vec![0.05, std::f64::consts::LN_2 / 5.0, 0.5],
            segment_lens: vec![1, 5],
            n_max: 9,
        }
    }
}

impl ExposureSection {
    /// Every `(alpha, L)` pair, alphas outermost.
    pub fn grid(&self) -> Result<Vec<ExposureParams>> {
        let mut out = Vec::with_capacity(self.alphas.len() * self.segment_lens.len());
        for &a in &self.alphas {
            for &l in &self.segment_lens {
                out.push(ExposureParams::new(a, l)?);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub threshold: f64,
    pub bootstrap_resamples: usize,
    pub ci_level: f64,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            bootstrap_resamples: 2000,
            ci_level: 0.95,
        }
    }
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            seed: 0,
            out: default_out(),
            risk_levels: default_risk_levels(),
            runs: default_runs(),
            model: ModelSection::default(),
            schedule: Schedule::default(),
            finetune: Schedule::finetune(),
            sequence: SequenceSection::default(),
            synthetic: SyntheticPoolConfig::default(),
            mnist: MnistSection::default(),
            xcorr: XcorrSection::default(),
            exposure: ExposureSection::default(),
            evaluation: EvaluationSection::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always serializable")
    }

    pub fn two_stage(&self) -> TwoStageSchedule {
        TwoStageSchedule {
            pretrain: self.schedule.clone(),
            finetune: self.finetune.clone(),
            negative_ratio: self.xcorr.negative_ratio,
        }
    }

    /// SHA-256 of the canonical TOML rendering, with the output directory
    /// left out.
    pub fn hash(&self) -> String {
        let placed = Self {
            out: PathBuf::new(),
            ..self.clone()
        };
        sha256_hex(placed.to_toml().as_bytes())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.risk_levels.is_empty() {
            return bad("risk_levels is empty".into());
        }
        if let Some(n) = self.risk_levels.iter().find(|n| !(1..=9).contains(*n)) {
            return bad(format!("risk level {n} outside 1..=9"));
        }
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if !(self.evaluation.ci_level > 0.0 && self.evaluation.ci_level < 1.0) {
            return bad(format!("ci_level {} outside (0, 1)", self.evaluation.ci_level));
        }
        if self.evaluation.bootstrap_resamples == 0 {
            return bad("bootstrap_resamples must be positive".into());
        }
        self.schedule.validate().map_err(|e| Error::Config(format!("schedule: {e}")))?;
        self.finetune.validate().map_err(|e| Error::Config(format!("finetune: {e}")))?;
        self.sequence
            .experiment(1)
            .sequence
            .validate()
            .map_err(|e| Error::Config(format!("sequence: {e}")))?;
        self.model
            .net(8, 8)
            .validate()
            .map_err(|e| Error::Config(format!("model: {e}")))?;
        match self.kind {
            ExperimentKind::SyntheticSeq => self
                .synthetic
                .validate()
                .map_err(|e| Error::Config(format!("synthetic: {e}")))?,
            ExperimentKind::Mnist1v0 => {
                if self.mnist.positive_digit == self.mnist.negative_digit || self.mnist.positive_digit > 9 || self.mnist.negative_digit > 9 {
                    return bad("mnist digits must be two distinct values in 0..=9".into());
                }
                if self.mnist.noise_std.is_nan() || self.mnist.noise_std < 0.0 {
                    return bad("mnist noise_std must be non-negative".into());
                }
            }
            ExperimentKind::XcorrDemo => {
                let x = &self.xcorr;
                x.video.validate().map_err(|e| Error::Config(format!("xcorr.video: {e}")))?;
                if x.event_segments_lo == 0 || x.event_segments_lo > x.event_segments_hi {
                    return bad("xcorr event length range is empty".into());
                }
                if x.train_events < 4 || x.test_events == 0 {
                    return bad("xcorr needs at least 4 training events and 1 test event".into());
                }
                if x.strong_train == 0 || x.strong_val == 0 || x.negative_ratio == 0 {
                    return bad("xcorr strong set sizes and negative_ratio must be positive".into());
                }
                if !(1..=9).contains(&x.risk_level) {
                    return bad(format!("xcorr risk level {} outside 1..=9", x.risk_level));
                }
            }
        }
        self.exposure.grid().map_err(|e| Error::Config(format!("exposure: {e}")))?;
        Ok(())
    }
}

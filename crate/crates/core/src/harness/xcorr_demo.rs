//! Weakly labelled video demo: synthetic streams, cross-correlation
//! matrices, two-stage training and saliency statistics.

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::image::evaluate;
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::net::{guided_backprop, pretrain_then_finetune, Dataset, ModelParams, StrongSet, TwoStageOutcome};
use crate::seed::{derive_seed, rng_from_seed, substream};
use crate::tensor::Tensor;
use crate::xcorr::{
    make_synthetic_stream, make_synthetic_video, normalize_percentile, segment_stream, xcorr_matrix, MotionKind,
    SegmentSource, StreamMode, SyntheticStream, VideoSegment, XCorrMatrix,
};

/// Normalized cross-correlation matrix of one segment, as a `[F, F]` image.
pub fn segment_matrix(segment: &VideoSegment) -> Result<Tensor> {
    Ok(normalize_percentile(&xcorr_matrix(segment)?)?.into_values())
}

/// Normalized matrices for many segments, computed in parallel and
/// returned in input order.
pub fn segment_matrices(segments: &[VideoSegment]) -> Result<Vec<XCorrMatrix>> {
    segments
        .par_iter()
        .map(|s| normalize_percentile(&xcorr_matrix(s)?))
        .collect()
}

/// Dataset of segment matrices and the number of degenerate ones.
fn matrix_dataset(segments: &[VideoSegment], labels: Vec<bool>) -> Result<(Dataset, usize)> {
    let m = segment_matrices(segments)?;
    let degenerate = m.iter().filter(|m| m.is_degenerate()).count();
    let images: Vec<Tensor> = m.into_iter().map(XCorrMatrix::into_values).collect();
    Ok((Dataset::from_images(&images, labels)?, degenerate))
}

/// Seeds of the demo's stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DemoSeeds {
    pub init: u64,
    pub train: u64,
    pub bootstrap: u64,
}

impl DemoSeeds {
    pub fn new(master: u64, risk_level: usize) -> Self {
        let n = risk_level as u32;
        Self {
            init: derive_seed(master, 0, 0, "xcorr/init"),
            train: derive_seed(master, n, 0, "xcorr/train"),
            bootstrap: derive_seed(master, n, 0, "xcorr/bootstrap"),
        }
    }
}

/// Every dataset the demo trains and evaluates on.
#[derive(Debug, Clone)]
pub struct XcorrData {
    pub strong: StrongSet,
    /// Weakly labelled segments of the training stream.
    pub weak: Dataset,
    /// Weak positives whose segment lies outside the true event.
    pub weak_mislabeled: usize,
    pub weak_positives: usize,
    /// Consecutive segments of the test stream with their true labels.
    pub test: Dataset,
    pub test_starts: Vec<usize>,
    pub train_stream: SyntheticStream,
    pub test_stream: SyntheticStream,
    /// Matrices whose percentile normalization was degenerate.
    pub degenerate: usize,
}

fn strong_split(config: &ExperimentConfig, per_class: usize, tag: &str) -> Result<(Dataset, usize)> {
    let v = &config.xcorr.video;
    let mut rng = substream(config.seed, 0, 0, tag);
    let mut segments = Vec::with_capacity(2 * per_class);
    let mut labels = Vec::with_capacity(2 * per_class);
    for _ in 0..per_class {
        let period = rand::Rng::random_range(&mut rng, v.period_lo..=v.period_hi);
        segments.push(make_synthetic_video(&mut rng, MotionKind::Repetitive { period }, v)?);
        labels.push(true);
        segments.push(make_synthetic_video(&mut rng, MotionKind::Aperiodic, v)?);
        labels.push(false);
    }
    matrix_dataset(&segments, labels)
}

pub fn xcorr_data(config: &ExperimentConfig) -> Result<XcorrData> {
    let x = &config.xcorr;
    let v = &x.video;
    let range = (x.event_segments_lo, x.event_segments_hi);
    let (strong_train, d1) = strong_split(config, x.strong_train, "xcorr/strong_train")?;
    let (strong_val, d2) = strong_split(config, x.strong_val, "xcorr/strong_val")?;
    let strong = StrongSet {
        train: strong_train,
        val: strong_val,
    };
    let stream = |events: usize, tag: &str| {
        make_synthetic_stream(&mut substream(config.seed, 0, 0, tag), v, events, range, x.gap_segments)
    };
    let train_stream = stream(x.train_events, "xcorr/train_stream")?;
    let test_stream = stream(x.test_events, "xcorr/test_stream")?;
    let seg_seconds = v.frames as f64 / v.fps;

    let weak_segments = segment_stream(
        train_stream.video.frames(),
        v.fps,
        seg_seconds,
        &train_stream.label_times(),
        x.risk_level,
        x.far_gap_seconds,
        StreamMode::Train,
    )?;
    let weak_positives = weak_segments.iter().filter(|s| s.label == Some(true)).count();
    let weak_mislabeled = weak_segments
        .iter()
        .filter(|s| matches!(s.source, SegmentSource::WeakPositive { .. }) && !train_stream.in_event(s.start_frame))
        .count();
    let labels = weak_segments.iter().map(|s| s.label == Some(true)).collect();
    let segs: Vec<VideoSegment> = weak_segments.into_iter().map(|s| s.segment).collect();
    let (weak, d3) = matrix_dataset(&segs, labels)?;

    let test_segments = segment_stream(
        test_stream.video.frames(),
        v.fps,
        seg_seconds,
        &[],
        1,
        0.0,
        StreamMode::Test,
    )?;
    let test_starts: Vec<usize> = test_segments.iter().map(|s| s.start_frame).collect();
    let labels = test_starts.iter().map(|&f| test_stream.in_event(f)).collect();
    let segs: Vec<VideoSegment> = test_segments.into_iter().map(|s| s.segment).collect();
    let (test, d4) = matrix_dataset(&segs, labels)?;

    Ok(XcorrData {
        strong,
        weak,
        weak_mislabeled,
        weak_positives,
        test,
        test_starts,
        train_stream,
        test_stream,
        degenerate: d1 + d2 + d3 + d4,
    })
}

/// Share of absolute saliency, over the lower triangle, that falls within
/// `band` of the diagonal.
pub fn diagonal_band_share(saliency: &Tensor, band: usize) -> Result<f64> {
    let &[f, g] = saliency.shape() else {
        return Err(Error::invalid(format!("saliency must be square 2D, got {:?}", saliency.shape())));
    };
    if f != g {
        return Err(Error::invalid(format!("saliency must be square, got {f}x{g}")));
    }
    let (mut near, mut total) = (0.0, 0.0);
    for i in 0..f {
        for j in 0..=i {
            let a = saliency.data()[i * f + j].abs();
            total += a;
            if i - j <= band {
                near += a;
            }
        }
    }
    Ok(if total > 0.0 { near / total } else { 0.0 })
}

/// Mean diagonal-band share of guided-backprop saliency over the selected
/// images of `data`.
pub fn mean_band_share(params: &ModelParams, data: &Dataset, select: bool, band: usize) -> Result<f64> {
    let idx: Vec<usize> = (0..data.len()).filter(|&i| data.labels()[i] == select).collect();
    if idx.is_empty() {
        return Err(Error::invalid("no images of the requested class"));
    }
    let shares = idx
        .par_iter()
        .map(|&i| diagonal_band_share(&guided_backprop(params, &data.image(i))?, band))
        .collect::<Result<Vec<f64>>>()?;
    Ok(shares.iter().sum::<f64>() / shares.len() as f64)
}

pub const SALIENCY_STATS_HEADER: &str = "statistic,value";

/// Where the trained detector looks on held-out segments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaliencyStats {
    pub band: usize,
    /// Band share on repetitive (positive) test segments.
    pub repetitive: f64,
    /// Band share on aperiodic (negative) test segments.
    pub aperiodic: f64,
    /// Band share of a uniform map over the lower triangle.
    pub uniform: f64,
}

impl SaliencyStats {
    pub fn compute(params: &ModelParams, test: &Dataset, band: usize) -> Result<Self> {
        let (f, _) = test.dims();
        let uniform = diagonal_band_share(&Tensor::new(vec![f, f], vec![1.0; f * f])?, band)?;
        Ok(Self {
            band,
            repetitive: mean_band_share(params, test, true, band)?,
            aperiodic: mean_band_share(params, test, false, band)?,
            uniform,
        })
    }

    /// Repetitive band share relative to the aperiodic baseline.
    pub fn ratio(&self) -> f64 {
        self.repetitive / self.aperiodic
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{SALIENCY_STATS_HEADER}\nband,{}\nrepetitive_band_share,{}\naperiodic_band_share,{}\nuniform_band_share,{}\nratio,{}\n",
            self.band,
            self.repetitive,
            self.aperiodic,
            self.uniform,
            self.ratio()
        )
    }
}

#[derive(Debug, Clone)]
pub struct XcorrDemoOutput {
    pub seeds: DemoSeeds,
    pub data: XcorrData,
    pub outcome: TwoStageOutcome,
    pub report: EvalReport,
    pub test_scores: Vec<f64>,
    pub saliency: SaliencyStats,
}

impl XcorrDemoOutput {
    pub fn params(&self) -> &ModelParams {
        self.outcome.params()
    }
}

/// Generates the data, pretrains on strong labels, fine-tunes with weak
/// labels at the configured risk level and evaluates on the test stream.
pub fn run_xcorr_demo(config: &ExperimentConfig) -> Result<XcorrDemoOutput> {
    let data = xcorr_data(config)?;
    let seeds = DemoSeeds::new(config.seed, config.xcorr.risk_level);
    let (h, w) = data.test.dims();
    let init = ModelParams::init(config.model.net(h, w), &mut rng_from_seed(seeds.init))?;
    let outcome = pretrain_then_finetune(
        init,
        &data.strong,
        &data.weak,
        &config.two_stage(),
        &mut rng_from_seed(seeds.train),
    )?;
    let (report, test_scores) = evaluate(outcome.params(), &data.test, config, seeds.bootstrap)?;
    let saliency = SaliencyStats::compute(outcome.params(), &data.test, config.xcorr.saliency_band)?;
    Ok(XcorrDemoOutput {
        seeds,
        data,
        outcome,
        report,
        test_scores,
        saliency,
    })
}

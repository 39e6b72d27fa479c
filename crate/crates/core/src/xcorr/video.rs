//! Synthetic videos, long-stream segmentation and raw-plane files.

use std::f64::consts::TAU;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::VideoSegment;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticVideoConfig {
    pub height: usize,
    pub width: usize,
    /// Frames per generated segment.
    pub frames: usize,
    pub fps: f64,
    pub blob_sigma: f64,
    pub blob_brightness: f64,
    /// Oscillation amplitude of repetitive motion, in pixels.
    pub amplitude: f64,
    /// Total drift of aperiodic motion over a segment, in pixels.
    pub drift: f64,
    /// Per-frame positional jitter of the aperiodic walk, in pixels.
    pub walk_jitter: f64,
    /// Standard deviation of the static background texture.
    pub background_std: f64,
    /// Standard deviation of per-frame pixel noise.
    pub noise_std: f64,
    /// Period range (frames) used when streams draw repetitive segments.
    pub period_lo: usize,
    pub period_hi: usize,
}

impl Default for SyntheticVideoConfig {
    fn default() -> Self {
        Self {
            height: 12,
            width: 12,
            frames: 16,
            fps: 15.0,
            blob_sigma: 1.2,
            blob_brightness: 1.0,
            amplitude: 3.0,
            drift: 6.0,
            walk_jitter: 0.15,
            background_std: 0.2,
            noise_std: 0.1,
            period_lo: 3,
            period_hi: 6,
        }
    }
}

impl SyntheticVideoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height < 4 || self.width < 4 || self.frames < 2 {
            return Err(Error::invalid("synthetic video needs frames >= 2 of at least 4x4"));
        }
        if !(self.fps > 0.0 && self.blob_sigma > 0.0) {
            return Err(Error::invalid("fps and blob width must be positive"));
        }
        if !(self.noise_std >= 0.0 && self.background_std >= 0.0 && self.walk_jitter >= 0.0) {
            return Err(Error::invalid("noise levels must be non-negative"));
        }
        if self.period_lo < 2 || self.period_lo > self.period_hi {
            return Err(Error::invalid("period range must satisfy 2 <= lo <= hi"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionKind {
    /// A blob oscillating along a line; frames `t` and `t + period` share
    /// the blob position exactly.
    Repetitive { period: usize },
    /// A blob drifting across the frame without returning.
    Aperiodic,
}

fn render(config: &SyntheticVideoConfig, background: &[f64], positions: &[(f64, f64)], noise: &mut dyn FnMut() -> f64) -> Vec<f64> {
    let (h, w) = (config.height, config.width);
    let two_s2 = 2.0 * config.blob_sigma * config.blob_sigma;
    let mut out = Vec::with_capacity(positions.len() * h * w);
    for &(py, px) in positions {
        for y in 0..h {
            for x in 0..w {
                let d2 = (y as f64 - py).powi(2) + (x as f64 - px).powi(2);
                out.push(background[y * w + x] + config.blob_brightness * (-d2 / two_s2).exp() + noise());
            }
        }
    }
    out
}

pub fn make_synthetic_video<R: Rng + ?Sized>(rng: &mut R, kind: MotionKind, config: &SyntheticVideoConfig) -> Result<VideoSegment> {
    config.validate()?;
    let (h, w, f) = (config.height, config.width, config.frames);
    let normal = |std: f64| Normal::new(0.0, std).map_err(|e| Error::invalid(e.to_string()));
    let bg_dist = normal(config.background_std)?;
    let background: Vec<f64> = (0..h * w).map(|_| bg_dist.sample(rng)).collect();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let theta = rng.random_range(0.0..TAU);
    let (dy, dx) = (theta.sin(), theta.cos());
    let positions: Vec<(f64, f64)> = match kind {
        MotionKind::Repetitive { period } => {
            if period < 2 {
                return Err(Error::invalid(format!("period must be at least 2, got {period}")));
            }
            let phase = rng.random_range(0.0..1.0);
            let (oy, ox) = (cy + rng.random_range(-1.0..=1.0), cx + rng.random_range(-1.0..=1.0));
            (0..f)
                .map(|t| {
                    let s = config.amplitude * (TAU * ((t % period) as f64 / period as f64 + phase)).sin();
                    (oy + s * dy, ox + s * dx)
                })
                .collect()
        }
        MotionKind::Aperiodic => {
            let jitter = normal(config.walk_jitter)?;
            let step = config.drift / (f - 1) as f64;
            let mut pos = (cy - config.drift / 2.0 * dy, cx - config.drift / 2.0 * dx);
            let mut out = Vec::with_capacity(f);
            for _ in 0..f {
                out.push(pos);
                pos = (pos.0 + step * dy + jitter.sample(rng), pos.1 + step * dx + jitter.sample(rng));
            }
            out
        }
    };
    let noise_dist = normal(config.noise_std)?;
    let mut noise = || noise_dist.sample(rng);
    let data = render(config, &background, &positions, &mut noise);
    VideoSegment::new(Tensor::new(vec![f, h, w], data)?, config.fps)
}

/// A long synthetic recording: aperiodic background with embedded
/// repetitive events aligned to the segment grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticStream {
    pub video: VideoSegment,
    /// `(start_frame, length_frames)` of each event.
    pub events: Vec<(usize, usize)>,
}

impl SyntheticStream {
    /// Event start times in seconds (the sparse labels).
    pub fn label_times(&self) -> Vec<f64> {
        self.events.iter().map(|&(s, _)| s as f64 / self.video.fps()).collect()
    }

    pub fn in_event(&self, frame: usize) -> bool {
        self.events.iter().any(|&(s, len)| frame >= s && frame < s + len)
    }
}

/// `gap` background segments, then for every event `M ~ U{lo..=hi}`
/// repetitive segments followed by `gap` background segments.
pub fn make_synthetic_stream<R: Rng + ?Sized>(
    rng: &mut R,
    config: &SyntheticVideoConfig,
    events: usize,
    (lo, hi): (usize, usize),
    gap: usize,
) -> Result<SyntheticStream> {
    config.validate()?;
    if lo == 0 || lo > hi {
        return Err(Error::invalid("event length range must satisfy 1 <= lo <= hi"));
    }
    let seg = config.frames;
    let mut data = Vec::new();
    let mut spans = Vec::with_capacity(events);
    let mut frame = 0;
    let push = |rng: &mut R, kind: MotionKind, data: &mut Vec<f64>| -> Result<()> {
        data.extend_from_slice(make_synthetic_video(rng, kind, config)?.frames().data());
        Ok(())
    };
    for _ in 0..gap {
        push(rng, MotionKind::Aperiodic, &mut data)?;
        frame += seg;
    }
    for _ in 0..events {
        let m = rng.random_range(lo..=hi);
        spans.push((frame, m * seg));
        for _ in 0..m {
            let period = rng.random_range(config.period_lo..=config.period_hi);
            push(rng, MotionKind::Repetitive { period }, &mut data)?;
            frame += seg;
        }
        for _ in 0..gap {
            push(rng, MotionKind::Aperiodic, &mut data)?;
            frame += seg;
        }
    }
    let video = VideoSegment::new(Tensor::new(vec![frame, config.height, config.width], data)?, config.fps)?;
    Ok(SyntheticStream { video, events: spans })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamMode {
    /// Weak positives after each label plus far-away negatives.
    Train,
    /// Consecutive segments spanning the whole stream, unlabelled.
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentSource {
    WeakPositive { label: usize, offset: usize },
    FarNegative,
    Consecutive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamSegment {
    pub start_frame: usize,
    pub segment: VideoSegment,
    /// Assigned label; `None` in test mode.
    pub label: Option<bool>,
    pub source: SegmentSource,
}

fn seconds_to_frames(seconds: f64, fps: f64) -> usize {
    // tolerance keeps exact multiples of 1/fps from rounding down a frame
    (seconds * fps + 1e-9).floor().max(0.0) as usize
}

/// Cuts a long `[T, H, W]` recording into segments of `seg_seconds`
/// (snapped to whole frames).
///
/// In train mode the `risk_level` consecutive segments starting at each label
/// time (rounded down to a frame) are positives, and every segment on the
/// grid anchored at frame 0 that stays at least `far_gap_seconds` from all
/// labels is a negative. Segments running past the end are dropped, as are
/// positives overlapping an earlier positive. Output is ordered by start frame.
pub fn segment_stream(
    frames: &Tensor,
    fps: f64,
    seg_seconds: f64,
    weak_labels: &[f64],
    risk_level: usize,
    far_gap_seconds: f64,
    mode: StreamMode,
) -> Result<Vec<StreamSegment>> {
    let &[total, h, w] = frames.shape() else {
        return Err(Error::invalid(format!("stream must be [T, H, W], got {:?}", frames.shape())));
    };
    if !(fps > 0.0 && seg_seconds > 0.0) {
        return Err(Error::invalid("fps and segment length must be positive"));
    }
    let seg = (seg_seconds * fps).round() as usize;
    if seg == 0 || seg > total {
        return Err(Error::invalid(format!(
            "stream of {total} frames is too short for one {seg}-frame segment"
        )));
    }
    let cut = |start: usize| -> Result<VideoSegment> {
        let n = h * w;
        let t = Tensor::new(vec![seg, h, w], frames.data()[start * n..(start + seg) * n].to_vec())?;
        VideoSegment::new(t, fps)
    };
    let mut out = Vec::new();
    match mode {
        StreamMode::Test => {
            for k in 0..total / seg {
                out.push(StreamSegment {
                    start_frame: k * seg,
                    segment: cut(k * seg)?,
                    label: None,
                    source: SegmentSource::Consecutive,
                });
            }
        }
        StreamMode::Train => {
            if risk_level == 0 {
                return Err(Error::invalid("risk level must be at least 1"));
            }
            if far_gap_seconds.is_nan() || far_gap_seconds < 0.0 {
                return Err(Error::invalid("far gap must be non-negative"));
            }
            let label_frames: Vec<usize> = weak_labels.iter().map(|&t| seconds_to_frames(t, fps)).collect();
            let mut taken: Vec<(usize, usize)> = Vec::new();
            for (li, &f0) in label_frames.iter().enumerate() {
                for k in 0..risk_level {
                    let s = f0 + k * seg;
                    if s + seg > total {
                        break;
                    }
                    if taken.iter().any(|&(a, _)| s < a + seg && a < s + seg) {
                        continue;
                    }
                    taken.push((s, out.len()));
                    out.push(StreamSegment {
                        start_frame: s,
                        segment: cut(s)?,
                        label: Some(true),
                        source: SegmentSource::WeakPositive { label: li, offset: k },
                    });
                }
            }
            let far = (far_gap_seconds * fps - 1e-9).ceil().max(0.0) as usize;
            let mut negatives = 0;
            for k in 0..total / seg {
                let s = k * seg;
                let clear = label_frames.iter().all(|&f0| s >= f0 + far || s + seg + far <= f0);
                if clear {
                    negatives += 1;
                    out.push(StreamSegment {
                        start_frame: s,
                        segment: cut(s)?,
                        label: Some(false),
                        source: SegmentSource::FarNegative,
                    });
                }
            }
            if negatives == 0 {
                return Err(Error::invalid(format!(
                    "no segment lies {far_gap_seconds} s away from every label"
                )));
            }
            out.sort_by_key(|s| (s.start_frame, s.label != Some(true)));
        }
    }
    Ok(out)
}

pub const RAW_VIDEO_MAGIC: &[u8; 4] = b"RSQV";

/// Writes `magic, F, H, W (u32 LE), fps (f64 LE)` and one 8-bit plane per
/// frame. Values are min-max scaled over the whole video to `0..=255`.
pub fn write_raw_video(path: &Path, video: &VideoSegment) -> Result<()> {
    let (h, w) = video.frame_dims();
    let data = video.frames().data();
    let (lo, hi) = data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let range = hi - lo;
    let mut out = Vec::with_capacity(24 + data.len());
    out.extend_from_slice(RAW_VIDEO_MAGIC);
    for d in [video.frame_count(), h, w] {
        out.extend_from_slice(&u32::try_from(d).map_err(|_| Error::invalid("video too large"))?.to_le_bytes());
    }
    out.extend_from_slice(&video.fps().to_le_bytes());
    out.extend(data.iter().map(|&v| {
        if range > 0.0 {
            ((v - lo) / range * 255.0).round() as u8
        } else {
            0
        }
    }));
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a raw-plane video; pixel values come back as `byte / 255`.
pub fn read_raw_video(path: &Path) -> Result<VideoSegment> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let ctx = path.display().to_string();
    if bytes.len() < 24 {
        return Err(Error::format(&ctx, bytes.len() as u64, "truncated video header"));
    }
    if &bytes[..4] != RAW_VIDEO_MAGIC {
        return Err(Error::format(&ctx, 0, "bad video magic"));
    }
    let u = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
    let (f, h, w) = (u(4), u(8), u(12));
    let fps = f64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes"));
    let need = f
        .checked_mul(h)
        .and_then(|n| n.checked_mul(w))
        .ok_or_else(|| Error::format(&ctx, 4, "video dimensions overflow"))?;
    if bytes.len() - 24 != need {
        return Err(Error::format(
            &ctx,
            24 + (bytes.len() - 24).min(need) as u64,
            format!("expected {need} pixel bytes, found {}", bytes.len() - 24),
        ));
    }
    let data = bytes[24..].iter().map(|&b| f64::from(b) / 255.0).collect();
    VideoSegment::new(Tensor::new(vec![f, h, w], data)?, fps).map_err(|e| Error::format(&ctx, 16, e.to_string()))
}

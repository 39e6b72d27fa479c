//! Frame-to-frame normalized cross-correlation matrices of video segments.
//!
//! Entry `(i, j)` of a segment's matrix is the correlation of frames `i` and
//! `j` for `j <= i`; the strictly upper triangle is zero. Periodic motion
//! shows up as bands parallel to the diagonal at multiples of the period.

mod video;

use std::fmt::Write as _;
use std::path::Path;

pub use video::{
    make_synthetic_stream, make_synthetic_video, read_raw_video, segment_stream, write_raw_video, MotionKind,
    SegmentSource, StreamMode, StreamSegment, SyntheticStream, SyntheticVideoConfig, RAW_VIDEO_MAGIC,
};

use crate::error::{Error, Result};
use crate::metrics::percentile_sorted;
use crate::tensor::Tensor;

/// Grayscale frames `[F, H, W]` sampled at `fps`.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSegment {
    frames: Tensor,
    fps: f64,
}

impl VideoSegment {
    pub fn new(frames: Tensor, fps: f64) -> Result<Self> {
        if frames.shape().len() != 3 || frames.shape()[0] == 0 {
            return Err(Error::invalid(format!(
                "video frames must be [F, H, W] with F >= 1, got {:?}",
                frames.shape()
            )));
        }
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::invalid(format!("fps must be positive, got {fps}")));
        }
        Ok(Self { frames, fps })
    }

    pub fn frames(&self) -> &Tensor {
        &self.frames
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn frame_count(&self) -> usize {
        self.frames.shape()[0]
    }

    /// `(H, W)`.
    pub fn frame_dims(&self) -> (usize, usize) {
        (self.frames.shape()[1], self.frames.shape()[2])
    }

    pub fn duration(&self) -> f64 {
        self.frame_count() as f64 / self.fps
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        let n = self.frames.shape()[1] * self.frames.shape()[2];
        &self.frames.data()[i * n..(i + 1) * n]
    }
}

/// `F x F` correlation matrix with a zero strictly-upper triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct XCorrMatrix {
    values: Tensor,
    normalized: bool,
    /// Set when normalization met a zero percentile range.
    degenerate: bool,
}

impl XCorrMatrix {
    /// Wraps raw values, zeroing nothing; fails if the upper triangle is not zero.
    pub fn from_values(values: Tensor, normalized: bool) -> Result<Self> {
        let &[f, g] = values.shape() else {
            return Err(Error::invalid(format!("matrix must be 2D, got {:?}", values.shape())));
        };
        if f != g {
            return Err(Error::invalid(format!("matrix must be square, got {f}x{g}")));
        }
        for i in 0..f {
            if values.data()[i * f + i + 1..(i + 1) * f].iter().any(|&v| v != 0.0) {
                return Err(Error::invalid(format!("row {i} has a non-zero upper-triangle entry")));
            }
        }
        values.ensure_finite("cross-correlation matrix")?;
        Ok(Self {
            values,
            normalized,
            degenerate: false,
        })
    }

    pub fn size(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn into_values(self) -> Tensor {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values.data()[i * self.size() + j]
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Lower-triangle entries (diagonal included), row-major.
    pub fn lower_triangle(&self) -> Vec<f64> {
        let f = self.size();
        (0..f).flat_map(|i| (0..=i).map(move |j| (i, j))).map(|(i, j)| self.get(i, j)).collect()
    }

    /// Mean of the entries at `i - j = lag`.
    pub fn lag_mean(&self, lag: usize) -> Option<f64> {
        let f = self.size();
        if lag >= f {
            return None;
        }
        let sum: f64 = (lag..f).map(|i| self.get(i, i - lag)).sum();
        Some(sum / (f - lag) as f64)
    }

    pub fn to_csv(&self) -> String {
        let f = self.size();
        let mut out = String::new();
        for row in self.values.data().chunks(f) {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

fn is_constant(frame: &[f64]) -> bool {
    frame.iter().all(|&v| v == frame[0])
}

struct Centered {
    values: Vec<f64>,
    sum_sq: f64,
    constant: bool,
}

fn center(frame: &[f64]) -> Centered {
    let mean = frame.iter().sum::<f64>() / frame.len() as f64;
    let values: Vec<f64> = frame.iter().map(|v| v - mean).collect();
    let sum_sq = values.iter().map(|v| v * v).sum();
    Centered {
        values,
        sum_sq,
        constant: is_constant(frame),
    }
}

fn ncc_centered(a: &Centered, b: &Centered) -> f64 {
    if a.constant || b.constant || a.sum_sq == 0.0 || b.sum_sq == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    (dot / (a.sum_sq * b.sum_sq).sqrt()).clamp(-1.0, 1.0)
}

/// Zero-mean normalized correlation of two equally sized frames. A constant
/// frame correlates 0 with everything.
pub fn ncc(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::invalid(format!(
            "frames must have equal non-zero size, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(ncc_centered(&center(a), &center(b)))
}

/// Unnormalized lower-triangular correlation matrix of a segment.
pub fn xcorr_matrix(segment: &VideoSegment) -> Result<XCorrMatrix> {
    let f = segment.frame_count();
    if f < 2 {
        return Err(Error::invalid(format!("segment has {f} frame(s), need at least 2")));
    }
    let centered: Vec<Centered> = (0..f).map(|i| center(segment.frame(i))).collect();
    let mut values = vec![0.0; f * f];
    for i in 0..f {
        for j in 0..=i {
            values[i * f + j] = ncc_centered(&centered[i], &centered[j]);
        }
    }
    XCorrMatrix::from_values(Tensor::new(vec![f, f], values)?, false)
}

/// Maps the 1st..99th percentile range of the lower triangle onto `[0, 1]`,
/// clamping outside it. The zeroed upper triangle is excluded from the
/// percentiles and stays zero. A zero range yields 0.5 everywhere below the
/// diagonal and sets the degenerate flag.
pub fn normalize_percentile(matrix: &XCorrMatrix) -> Result<XCorrMatrix> {
    if matrix.normalized {
        return Err(Error::invalid("matrix is already normalized"));
    }
    let mut lower = matrix.lower_triangle();
    lower.sort_by(f64::total_cmp);
    let p1 = percentile_sorted(&lower, 0.01);
    let p99 = percentile_sorted(&lower, 0.99);
    let f = matrix.size();
    let mut values = vec![0.0; f * f];
    let degenerate = p99 <= p1;
    for i in 0..f {
        for j in 0..=i {
            values[i * f + j] = if degenerate {
                0.5
            } else {
                ((matrix.get(i, j) - p1) / (p99 - p1)).clamp(0.0, 1.0)
            };
        }
    }
    Ok(XCorrMatrix {
        values: Tensor::new(vec![f, f], values)?,
        normalized: true,
        degenerate,
    })
}

pub const MATRIX_MAGIC: &[u8; 4] = b"XCM1";

/// `magic, F (u32 LE), F*F f64 LE row-major`.
pub fn encode_matrix(values: &Tensor) -> Result<Vec<u8>> {
    let &[f, g] = values.shape() else {
        return Err(Error::invalid("matrix must be 2D"));
    };
    if f != g {
        return Err(Error::invalid("matrix must be square"));
    }
    let f32_ = u32::try_from(f).map_err(|_| Error::invalid("matrix too large"))?;
    let mut out = Vec::with_capacity(8 + 8 * f * f);
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&f32_.to_le_bytes());
    for v in values.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_matrix(bytes: &[u8], context: &str) -> Result<Tensor> {
    if bytes.len() < 8 {
        return Err(Error::format(context, bytes.len() as u64, "truncated matrix header"));
    }
    if &bytes[..4] != MATRIX_MAGIC {
        return Err(Error::format(context, 0, "bad matrix magic"));
    }
    let f = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let need = f
        .checked_mul(f)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::format(context, 4, "matrix size overflows"))?;
    let payload = &bytes[8..];
    if payload.len() != need {
        return Err(Error::format(
            context,
            (8 + payload.len().min(need)) as u64,
            format!("expected {need} payload bytes for F = {f}, found {}", payload.len()),
        ));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Tensor::new(vec![f, f], data)
}

pub fn write_matrix(path: &Path, values: &Tensor) -> Result<()> {
    std::fs::write(path, encode_matrix(values)?).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix(&bytes, &path.display().to_string())
}

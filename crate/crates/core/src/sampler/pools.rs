//! Synthetic element pools and pixel-noise preprocessing.
//!
//! Synthetic classes are anisotropic 2D Gaussian bumps: positives are
//! elongated vertically, negatives horizontally. The bump centre is jittered
//! around the image centre, the amplitude varies per image, and i.i.d.
//! Gaussian pixel noise is added on top.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Element;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticPoolConfig {
    pub height: usize,
    pub width: usize,
    /// Training elements generated per class.
    pub pool_size: usize,
    /// Held-out test elements generated per class.
    pub test_pool_size: usize,
    pub sigma_major: f64,
    pub sigma_minor: f64,
    /// Maximum centre offset in pixels along each axis.
    pub jitter: f64,
    pub amplitude_lo: f64,
    pub amplitude_hi: f64,
    pub noise_std: f64,
}

impl Default for SyntheticPoolConfig {
    fn default() -> Self {
        Self {
            height: 8,
            width: 8,
            pool_size: 400,
            test_pool_size: 200,
            sigma_major: 2.2,
            sigma_minor: 0.8,
            jitter: 2.5,
            amplitude_lo: 0.6,
            amplitude_hi: 1.0,
            noise_std: 0.45,
        }
    }
}

impl SyntheticPoolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height < 4 || self.width < 4 {
            return Err(Error::invalid("synthetic images must be at least 4x4"));
        }
        if self.pool_size == 0 {
            return Err(Error::invalid("pool size must be positive"));
        }
        if !(self.sigma_major > 0.0 && self.sigma_minor > 0.0) {
            return Err(Error::invalid("bump widths must be positive"));
        }
        if !(self.noise_std >= 0.0 && self.jitter >= 0.0) {
            return Err(Error::invalid("noise and jitter must be non-negative"));
        }
        if self.amplitude_lo > self.amplitude_hi {
            return Err(Error::invalid("amplitude range is inverted"));
        }
        Ok(())
    }
}

/// Generates `(positives, negatives)`; ids are `"{tag}/pos/{i}"` and `"{tag}/neg/{i}"`.
pub fn make_synthetic_pools<R: Rng + ?Sized>(
    rng: &mut R,
    config: &SyntheticPoolConfig,
    tag: &str,
) -> Result<(Vec<Element>, Vec<Element>)> {
    config.validate()?;
    let noise = Normal::new(0.0, config.noise_std).map_err(|e| Error::invalid(e.to_string()))?;
    let mut make = |positive: bool, i: usize| {
        let cy = (config.height as f64 - 1.0) / 2.0 + rng.random_range(-config.jitter..=config.jitter);
        let cx = (config.width as f64 - 1.0) / 2.0 + rng.random_range(-config.jitter..=config.jitter);
        let amp = rng.random_range(config.amplitude_lo..=config.amplitude_hi);
        let (sy, sx) = if positive {
            (config.sigma_major, config.sigma_minor)
        } else {
            (config.sigma_minor, config.sigma_major)
        };
        let mut data = Vec::with_capacity(config.height * config.width);
        for y in 0..config.height {
            for x in 0..config.width {
                let dy = y as f64 - cy;
                let dx = x as f64 - cx;
                let bump = amp * (-(dy * dy / (2.0 * sy * sy) + dx * dx / (2.0 * sx * sx))).exp();
                data.push(bump + noise.sample(rng));
            }
        }
        Element {
            id: format!("{tag}/{}/{i}", if positive { "pos" } else { "neg" }),
            features: Tensor::new(vec![config.height, config.width], data).expect("sized above"),
            true_class: positive,
        }
    };
    let pos = (0..config.pool_size).map(|i| make(true, i)).collect();
    let neg = (0..config.pool_size).map(|i| make(false, i)).collect();
    Ok((pos, neg))
}

/// Position-free orientation probe for the synthetic classes: energy of
/// horizontal pixel differences minus energy of vertical ones. Positive
/// scores indicate the vertically elongated (positive) class.
pub fn orientation_probe(features: &Tensor) -> f64 {
    let (h, w) = (features.shape()[0], features.shape()[1]);
    let d = features.data();
    let mut across = 0.0;
    let mut along = 0.0;
    for y in 0..h {
        for x in 0..w {
            if x + 1 < w {
                across += (d[y * w + x + 1] - d[y * w + x]).powi(2);
            }
            if y + 1 < h {
                along += (d[(y + 1) * w + x] - d[y * w + x]).powi(2);
            }
        }
    }
    across - along
}

/// Adds i.i.d. `N(mean, stddev^2)` noise to every pixel.
pub fn add_gaussian_noise<R: Rng + ?Sized>(
    rng: &mut R,
    image: &mut Tensor,
    mean: f64,
    stddev: f64,
) -> Result<()> {
    if !(stddev >= 0.0 && stddev.is_finite() && mean.is_finite()) {
        return Err(Error::invalid(format!(
            "noise needs finite mean and non-negative stddev, got N({mean}, {stddev}^2)"
        )));
    }
    let dist = Normal::new(mean, stddev).map_err(|e| Error::invalid(e.to_string()))?;
    for v in image.data_mut() {
        *v += dist.sample(rng);
    }
    Ok(())
}

/// Optional pixel noise followed by per-image min-max rescaling.
pub fn preprocess_pool<R: Rng + ?Sized>(
    rng: &mut R,
    pool: &mut [Element],
    noise: Option<(f64, f64)>,
) -> Result<()> {
    for e in pool.iter_mut() {
        if let Some((mean, std)) = noise {
            add_gaussian_noise(rng, &mut e.features, mean, std)?;
        }
        e.features = e.features.min_max_rescaled();
    }
    Ok(())
}

//! Reference implementations written independently of the library.

use rand::Rng;
use rand_distr::{Distribution, Exp};

/// Monte-Carlo mislabeled fraction under exponential event survival.
///
/// Each trial draws an event duration (in elements) with the given decay
/// rate and counts the sampled offsets `0..n` that fall at or past it.
/// Returns `(mean, standard error)`.
pub fn mc_exposure<R: Rng>(rng: &mut R, rate_per_element: f64, n: u32, trials: usize) -> (f64, f64) {
    let durations: Vec<f64> = Exp::new(rate_per_element).unwrap().sample_iter(rng).take(trials).collect();
    mc_exposure_from(&durations, n)
}

/// Same estimate over a fixed set of sampled durations.
pub fn mc_exposure_from(durations: &[f64], n: u32) -> (f64, f64) {
    let fractions: Vec<f64> = durations
        .iter()
        .map(|&d| (0..n).filter(|&k| f64::from(k) >= d).count() as f64 / f64::from(n))
        .collect();
    mean_and_se(&fractions)
}

pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Average precision by sweeping every distinct score as a threshold and
/// counting predictions from scratch at each one.
pub fn ap_exhaustive(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return None;
    }
    let mut thresholds = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let (mut weighted, mut prev_tp) = (0.0, 0usize);
    for t in thresholds {
        let tp = scores.iter().zip(labels).filter(|(s, l)| **s >= t && **l).count();
        let fp = scores.iter().zip(labels).filter(|(s, l)| **s >= t && !**l).count();
        if tp > prev_tp {
            weighted += (tp - prev_tp) as f64 * (tp as f64 / (tp + fp) as f64);
        }
        prev_tp = tp;
    }
    Some(weighted / positives as f64)
}

/// AUC by enumerating every positive/negative pair; ties count one half.
pub fn auc_pairwise(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, l)| **l).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, l)| !**l).map(|(s, _)| *s).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut twice_wins = 0u64;
    for p in &pos {
        for n in &neg {
            twice_wins += if p > n {
                2
            } else if p == n {
                1
            } else {
                0
            };
        }
    }
    Some(twice_wins as f64 / (2 * pos.len() * neg.len()) as f64)
}

/// Number of positives among the first `n` elements after a label when the
/// event covers the first `m` of them.
pub fn false_positives_by_enumeration(m: usize, n: usize) -> usize {
    (0..n).filter(|&k| k >= m).count()
}

//! Shared helpers for the integration tests.
#![allow(dead_code)]

pub mod gradcheck;
pub mod oracles;

use std::path::{Path, PathBuf};

use riskseq::harness::ExperimentConfig;

pub fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

pub fn load_config(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&config_path(name)).unwrap()
}

/// A synthetic sweep small enough for quick tests.
pub fn tiny_sweep_config(out: &Path) -> ExperimentConfig {
    let mut c = load_config("synthetic_seq.toml");
    c.out = out.to_path_buf();
    c.risk_levels = vec![1, 3];
    c.runs = 2;
    c.schedule.max_epochs = 4;
    c.synthetic.pool_size = 120;
    c.synthetic.test_pool_size = 30;
    c.sequence.n_sequences = 6;
    c.sequence.direct_negatives = 6;
    c.evaluation.bootstrap_resamples = 50;
    c
}

/// A video demo small enough for quick tests.
pub fn tiny_xcorr_config(out: &Path) -> ExperimentConfig {
    let mut c = load_config("xcorr_demo.toml");
    c.out = out.to_path_buf();
    c.xcorr.train_events = 6;
    c.xcorr.test_events = 4;
    c.xcorr.strong_train = 6;
    c.xcorr.strong_val = 4;
    c.schedule.max_epochs = 3;
    c.finetune.max_epochs = 3;
    c.evaluation.bootstrap_resamples = 50;
    c
}

/// Every file below `root` with its path relative to `root`, sorted.
pub fn tree(root: &Path) -> Vec<PathBuf> {
    fn walk(dir: &Path, root: &Path, out: &mut Vec<PathBuf>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(&p, root, out);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}

/// File contents with the manifest timestamp line removed.
pub fn comparable(path: &Path) -> Vec<u8> {
    let bytes = std::fs::read(path).unwrap();
    if path.file_name().is_some_and(|n| n == "manifest") {
        let text = String::from_utf8(bytes).unwrap();
        text.lines()
            .filter(|l| !l.starts_with("created_unix="))
            .collect::<Vec<_>>()
            .join("\n")
            .into_bytes()
    } else {
        bytes
    }
}

/// Paths whose contents differ between two output trees, or that exist in
/// only one of them.
pub fn tree_differences(a: &Path, b: &Path) -> Vec<PathBuf> {
    let (ta, tb) = (tree(a), tree(b));
    let mut diff: Vec<PathBuf> = ta.iter().filter(|p| !tb.contains(p)).cloned().collect();
    diff.extend(tb.iter().filter(|p| !ta.contains(p)).cloned());
    for p in ta.iter().filter(|p| tb.contains(p)) {
        if comparable(&a.join(p)) != comparable(&b.join(p)) {
            diff.push(p.clone());
        }
    }
    diff
}

/// Peaks at multiples of the period: over lags `1..=F/2`, each multiple of
/// `period` has a higher mean correlation than every other lag.
pub fn checkerboard_holds(m: &riskseq::xcorr::XCorrMatrix, period: usize) -> bool {
    let lags = 1..=m.size() / 2;
    let on: Vec<f64> = lags.clone().filter(|l| l % period == 0).map(|l| m.lag_mean(l).unwrap()).collect();
    let off: Vec<f64> = lags.filter(|l| l % period != 0).map(|l| m.lag_mean(l).unwrap()).collect();
    let lo = on.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = off.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    !on.is_empty() && lo > hi
}

/// Lags in `2..=F/2` whose mean correlation exceeds the lag-1 mean.
pub fn lags_above_first(m: &riskseq::xcorr::XCorrMatrix) -> Vec<usize> {
    let first = m.lag_mean(1).unwrap();
    (2..=m.size() / 2).filter(|&l| m.lag_mean(l).unwrap() > first).collect()
}

//! Image-sequence experiment cells (synthetic pools or MNIST digits).

use std::path::Path;

use super::config::{ExperimentConfig, ExperimentKind};
use crate::error::{Error, Result};
use crate::metrics::{EvalReport, ScoredSet};
use crate::net::{train, Dataset, ModelParams, TrainOutcome};
use crate::sampler::{
    build_image_experiment, load_idx, make_synthetic_pools, preprocess_pool, Element, ImageExperiment, ManifestRow,
    SplitName, TrainingSet,
};
use crate::seed::{derive_seed, rng_from_seed, substream};
use crate::tensor::Tensor;

/// Element pools shared by every cell of a sweep.
#[derive(Debug, Clone)]
pub struct ImagePools {
    pub train_pos: Vec<Element>,
    pub train_neg: Vec<Element>,
    /// Held-out elements with their true classes.
    pub test: Vec<Element>,
}

impl ImagePools {
    pub fn dims(&self) -> (usize, usize) {
        let s = self.test[0].features.shape();
        (s[0], s[1])
    }
}

pub const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

/// True when all four MNIST IDX files exist in `dir`.
pub fn mnist_available(dir: &Path) -> bool {
    MNIST_FILES.iter().all(|f| dir.join(f).is_file())
}

/// Builds (or loads) the pools for an image experiment. Depends only on the
/// master seed, so every sweep cell sees the same pools and test split.
pub fn image_pools(config: &ExperimentConfig) -> Result<ImagePools> {
    match config.kind {
        ExperimentKind::SyntheticSeq => {
            let s = &config.synthetic;
            let (train_pos, train_neg) = make_synthetic_pools(&mut substream(config.seed, 0, 0, "pools/train"), s, "train")?;
            let test_cfg = crate::sampler::SyntheticPoolConfig {
                pool_size: s.test_pool_size,
                ..s.clone()
            };
            let (tp, tn) = make_synthetic_pools(&mut substream(config.seed, 0, 0, "pools/test"), &test_cfg, "test")?;
            Ok(ImagePools {
                train_pos,
                train_neg,
                test: tp.into_iter().chain(tn).collect(),
            })
        }
        ExperimentKind::Mnist1v0 => mnist_pools(config),
        ExperimentKind::XcorrDemo => Err(Error::Config("xcorr_demo has no image pools; use the xcorr-demo command".into())),
    }
}

fn mnist_pools(config: &ExperimentConfig) -> Result<ImagePools> {
    let m = &config.mnist;
    let dir = m
        .dir
        .as_ref()
        .ok_or_else(|| Error::Config("mnist.dir is not set".into()))?;
    let load = |images: &str, labels: &str, tag: &str| -> Result<(Vec<Element>, Vec<Element>)> {
        let imgs = load_idx(&dir.join(images))?.images()?;
        let labs = load_idx(&dir.join(labels))?;
        if labs.dims.len() != 1 || labs.data.len() != imgs.len() {
            return Err(Error::format(
                dir.join(labels).display().to_string(),
                0,
                format!("{} labels for {} images", labs.data.len(), imgs.len()),
            ));
        }
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        for (i, (img, &lab)) in imgs.into_iter().zip(&labs.data).enumerate() {
            // pixel scale [0, 1] before noise
            let scaled = Tensor::new(img.shape().to_vec(), img.data().iter().map(|v| v / 255.0).collect())?;
            if lab == m.positive_digit {
                pos.push(Element {
                    id: format!("{tag}/{i}"),
                    features: scaled,
                    true_class: true,
                });
            } else if lab == m.negative_digit {
                neg.push(Element {
                    id: format!("{tag}/{i}"),
                    features: scaled,
                    true_class: false,
                });
            }
        }
        Ok((pos, neg))
    };
    let noise = Some((m.noise_mean, m.noise_std));
    let (mut train_pos, mut train_neg) = load(MNIST_FILES[0], MNIST_FILES[1], "train")?;
    let (mut test_pos, mut test_neg) = load(MNIST_FILES[2], MNIST_FILES[3], "test")?;
    let mut rng = substream(config.seed, 0, 0, "pools/noise");
    for pool in [&mut train_pos, &mut train_neg, &mut test_pos, &mut test_neg] {
        preprocess_pool(&mut rng, pool, noise)?;
    }
    Ok(ImagePools {
        train_pos,
        train_neg,
        test: test_pos.into_iter().chain(test_neg).collect(),
    })
}

/// Stage seeds of one sweep cell. Dataset and initialisation depend on the
/// run only, so every risk level of a run sees the same sequences and
/// starting weights; the epoch order depends on both.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellSeeds {
    pub data: u64,
    pub init: u64,
    pub train: u64,
    pub bootstrap: u64,
}

impl CellSeeds {
    pub fn new(master: u64, risk_level: usize, run: usize) -> Self {
        let (n, r) = (risk_level as u32, run as u32);
        Self {
            data: derive_seed(master, 0, r, "data"),
            init: derive_seed(master, 0, r, "init"),
            train: derive_seed(master, n, r, "train"),
            bootstrap: derive_seed(master, n, r, "bootstrap"),
        }
    }
}

pub fn to_dataset(set: &TrainingSet) -> Result<Dataset> {
    Dataset::from_images(
        set.samples.iter().map(|s| &s.element.features),
        set.samples.iter().map(|s| s.assigned_label).collect(),
    )
}

pub fn test_dataset(test: &[Element]) -> Result<Dataset> {
    Dataset::from_images(test.iter().map(|e| &e.features), test.iter().map(|e| e.true_class).collect())
}

/// Everything one `(N, run)` cell produces.
#[derive(Debug, Clone)]
pub struct CellOutput {
    pub risk_level: usize,
    pub run: usize,
    pub seeds: CellSeeds,
    pub experiment: ImageExperiment,
    pub outcome: TrainOutcome,
    pub report: EvalReport,
    pub test_scores: Vec<f64>,
}

impl CellOutput {
    pub fn mislabeled_fraction(&self) -> f64 {
        self.experiment.train.mislabeled_fraction()
    }

    pub fn dataset_manifest(&self) -> Vec<ManifestRow> {
        let mut rows = ManifestRow::from_set(SplitName::Train, &self.experiment.train);
        rows.extend(ManifestRow::from_set(SplitName::Val, &self.experiment.val));
        rows
    }
}

/// Scores a model on a labelled set and builds the report with bootstrap
/// intervals.
pub fn evaluate(
    params: &ModelParams,
    data: &Dataset,
    config: &ExperimentConfig,
    bootstrap_seed: u64,
) -> Result<(EvalReport, Vec<f64>)> {
    let scores = params.predict(&data.as_batch())?;
    let set = ScoredSet::new(scores.clone(), data.labels().to_vec())?;
    let e = &config.evaluation;
    let report = EvalReport::compute(&set, e.threshold)?.with_intervals(
        &mut rng_from_seed(bootstrap_seed),
        &set,
        e.bootstrap_resamples,
        e.ci_level,
    )?;
    Ok((report, scores))
}

/// Builds the cell's dataset, trains from the run's initialisation and
/// evaluates on the shared test split.
pub fn run_image_cell(config: &ExperimentConfig, pools: &ImagePools, risk_level: usize, run: usize) -> Result<CellOutput> {
    let seeds = CellSeeds::new(config.seed, risk_level, run);
    let experiment = build_image_experiment(
        seeds.data,
        &config.sequence.experiment(risk_level),
        &pools.train_pos,
        &pools.train_neg,
        &pools.test,
    )?;
    let train_set = to_dataset(&experiment.train)?;
    let val_set = to_dataset(&experiment.val)?;
    let (h, w) = train_set.dims();
    let init = ModelParams::init(config.model.net(h, w), &mut rng_from_seed(seeds.init))?;
    let outcome = train(init, &train_set, &val_set, &config.schedule, &mut rng_from_seed(seeds.train))?;
    let (report, test_scores) = evaluate(&outcome.params, &test_dataset(&experiment.test)?, config, seeds.bootstrap)?;
    Ok(CellOutput {
        risk_level,
        run,
        seeds,
        experiment,
        outcome,
        report,
        test_scores,
    })
}

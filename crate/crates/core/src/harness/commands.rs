//! The harness commands. Each writes its artifacts below the configured
//! output directory and returns what it computed.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;

use super::config::{ExperimentConfig, ExperimentKind};
use super::image::{evaluate, image_pools, run_image_cell, test_dataset, to_dataset, CellOutput, CellSeeds, ImagePools};
use super::xcorr_demo::{run_xcorr_demo, xcorr_data, DemoSeeds, XcorrData, XcorrDemoOutput};
use crate::error::{Error, Result, ResultExt};
use crate::exposure::{exposure_curve, write_exposure_csv, ExposureRow};
use crate::metrics::{bootstrap_mean_ci, EvalReport};
use crate::net::{
    finetune, guided_backprop, load_params, load_params_for, save_params, train, weighted_schedule, History,
    ModelParams, TrainOutcome,
};
use crate::sampler::{
    build_image_experiment, manifest_csv, write_idx, Element, IdxArray, ManifestRow, SampleSource, SplitName,
};
use crate::seed::{rng_from_seed, sha256_hex, substream};
use crate::tensor::Tensor;
use crate::xcorr::{read_matrix, write_matrix, write_raw_video};

/// Process-level options shared by every command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads for sweeps and per-segment work.
    pub jobs: usize,
    /// Treat recoverable irregularities (degenerate matrices, clipped
    /// sequences) as errors.
    pub strict: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { jobs: 1, strict: false }
    }
}

impl RunOptions {
    /// Runs `f` on a thread pool of `jobs` workers.
    pub fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs.max(1))
            .build()
            .map_err(|e| Error::invalid(format!("cannot start {} worker threads: {e}", self.jobs)))?;
        Ok(pool.install(f))
    }

    fn apply(&self, config: &ExperimentConfig) -> ExperimentConfig {
        let mut c = config.clone();
        if self.strict {
            c.sequence.lenient_clip = false;
        }
        c
    }
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn kind_dir(config: &ExperimentConfig) -> PathBuf {
    config.out.join(config.kind.as_str())
}

/// `<out>/<kind>/N=<n>/run=<r>`.
pub fn run_dir(config: &ExperimentConfig, risk_level: usize, run: usize) -> PathBuf {
    kind_dir(config).join(format!("N={risk_level}")).join(format!("run={run}"))
}

/// Ordered `key=value` record of how an artifact set was produced. The
/// timestamp is the only line that changes between identical runs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunManifest {
    pub entries: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        let mut m = Self::default();
        m.push("command", command);
        m.push("kind", config.kind.as_str());
        m.push("config_sha256", config.hash());
        m.push("master_seed", config.seed);
        m
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k}={v}");
        }
        let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let _ = writeln!(out, "created_unix={now}");
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let entries = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                l.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| Error::format("run manifest", i as u64, format!("bad line `{l}`")))
            })
            .collect::<Result<_>>()?;
        Ok(Self { entries })
    }
}

pub const SCORES_CSV_HEADER: &str = "index,label,score";

pub fn scores_csv(labels: &[bool], scores: &[f64]) -> String {
    let mut out = format!("{SCORES_CSV_HEADER}\n");
    for (i, (l, s)) in labels.iter().zip(scores).enumerate() {
        let _ = writeln!(out, "{i},{},{s}", u8::from(*l));
    }
    out
}

/// Fraction of training risk positives whose true label is negative,
/// recomputed from a dataset manifest.
pub fn manifest_mislabeled_fraction(rows: &[ManifestRow]) -> f64 {
    let risk: Vec<&ManifestRow> = rows
        .iter()
        .filter(|r| r.split == SplitName::Train.as_str() && r.source == SampleSource::RiskPositive.as_str())
        .collect();
    if risk.is_empty() {
        return 0.0;
    }
    risk.iter().filter(|r| !r.true_label).count() as f64 / risk.len() as f64
}

fn write_training(dir: &Path, outcome: &TrainOutcome, report: &EvalReport, labels: &[bool], scores: &[f64]) -> Result<()> {
    write_file(&dir.join("history.csv"), outcome.history.to_csv())?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_params(&outcome.params, &dir.join("params.bin"))?;
    write_file(&dir.join("report.csv"), report.to_csv())?;
    write_file(&dir.join("scores.csv"), scores_csv(labels, scores))
}

fn record_history(m: &mut RunManifest, prefix: &str, history: &History) {
    m.push(&format!("{prefix}epochs"), history.epochs.len());
    m.push(
        &format!("{prefix}selected_epoch"),
        history.selected_epoch().map(|e| e.to_string()).unwrap_or_default(),
    );
}

/// Writes `<out>/exposure.csv` for the configured grid.
pub fn cmd_exposure(config: &ExperimentConfig) -> Result<(PathBuf, Vec<ExposureRow>)> {
    let rows = exposure_curve(&config.exposure.grid()?, config.exposure.n_max)?;
    let path = config.out.join("exposure.csv");
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_exposure_csv(&path, &rows)?;
    Ok((path, rows))
}

fn to_bytes(image: &Tensor) -> Vec<u8> {
    let scaled = image.min_max_rescaled();
    scaled.data().iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect()
}

fn write_pool_idx(dir: &Path, name: &str, elements: &[Element]) -> Result<()> {
    let (h, w) = {
        let s = elements[0].features.shape();
        (s[0], s[1])
    };
    let images = IdxArray {
        dims: vec![elements.len(), h, w],
        data: elements.iter().flat_map(|e| to_bytes(&e.features)).collect(),
    };
    let labels = IdxArray {
        dims: vec![elements.len()],
        data: elements.iter().map(|e| u8::from(e.true_class)).collect(),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_idx(&dir.join(format!("{name}-images-idx3-ubyte")), &images)?;
    write_idx(&dir.join(format!("{name}-labels-idx1-ubyte")), &labels)
}

/// Test-split manifest shared by every cell of an image experiment.
pub fn test_manifest(pools: &ImagePools) -> String {
    manifest_csv(&ManifestRow::from_test(&pools.test))
}

/// Builds every dataset of the sweep grid and writes the manifests, plus
/// 8-bit IDX previews of the pools. For the video demo it writes the raw
/// streams, the segment list and the test matrices.
pub fn cmd_generate(config: &ExperimentConfig, options: &RunOptions) -> Result<PathBuf> {
    let config = options.apply(config);
    let dir = kind_dir(&config);
    if config.kind == ExperimentKind::XcorrDemo {
        return generate_xcorr(&config, options);
    }
    let pools = image_pools(&config)?;
    write_file(&dir.join("test_manifest.csv"), test_manifest(&pools))?;
    let pool_dir = dir.join("pools");
    let train: Vec<Element> = pools.train_pos.iter().chain(&pools.train_neg).cloned().collect();
    write_pool_idx(&pool_dir, "train", &train)?;
    write_pool_idx(&pool_dir, "test", &pools.test)?;
    for &n in &config.risk_levels {
        for run in 0..config.runs {
            let seeds = CellSeeds::new(config.seed, n, run);
            let exp = build_image_experiment(
                seeds.data,
                &config.sequence.experiment(n),
                &pools.train_pos,
                &pools.train_neg,
                &pools.test,
            )
            .context(|| format!("N={n} run={run}"))?;
            let mut rows = ManifestRow::from_set(SplitName::Train, &exp.train);
            rows.extend(ManifestRow::from_set(SplitName::Val, &exp.val));
            write_file(&run_dir(&config, n, run).join("dataset.csv"), manifest_csv(&rows))?;
        }
    }
    Ok(dir)
}

pub const SEGMENTS_CSV_HEADER: &str = "split,index,start_frame,label";

fn generate_xcorr(config: &ExperimentConfig, options: &RunOptions) -> Result<PathBuf> {
    let dir = kind_dir(config);
    let data = options.install(|| xcorr_data(config))??;
    check_degenerate(options, &data)?;
    let matrices = dir.join("matrices");
    std::fs::create_dir_all(&matrices).map_err(|e| Error::io(&matrices, e))?;
    write_raw_video(&dir.join("train_stream.rsqv"), &data.train_stream.video)?;
    write_raw_video(&dir.join("test_stream.rsqv"), &data.test_stream.video)?;
    let mut csv = format!("{SEGMENTS_CSV_HEADER}\n");
    for (i, (&start, &label)) in data.test_starts.iter().zip(data.test.labels()).enumerate() {
        let _ = writeln!(csv, "test,{i},{start},{}", u8::from(label));
        write_matrix(&matrices.join(format!("test_{i:04}.xcm")), &data.test.image(i))?;
    }
    write_file(&dir.join("segments.csv"), csv)?;
    Ok(dir)
}

fn check_degenerate(options: &RunOptions, data: &XcorrData) -> Result<()> {
    if options.strict && data.degenerate > 0 {
        return Err(Error::Degenerate(format!(
            "{} segment matrices have no spread between their 1st and 99th percentiles",
            data.degenerate
        )));
    }
    Ok(())
}

/// One training run (the strong-label pretraining stage for the video demo)
/// with artifacts under the run directory.
pub fn cmd_train(config: &ExperimentConfig, risk_level: usize, run: usize, options: &RunOptions) -> Result<PathBuf> {
    let config = options.apply(config);
    match config.kind {
        ExperimentKind::XcorrDemo => train_xcorr(&config, options),
        _ => {
            let pools = image_pools(&config)?;
            let cell = options
                .install(|| run_image_cell(&config, &pools, risk_level, run))?
                .context(|| format!("N={risk_level} run={run}"))?;
            write_cell(&config, &pools, &cell)
        }
    }
}

/// Writes a sweep cell's run directory and returns its path.
pub fn write_cell(config: &ExperimentConfig, pools: &ImagePools, cell: &CellOutput) -> Result<PathBuf> {
    let dir = run_dir(config, cell.risk_level, cell.run);
    let dataset = manifest_csv(&cell.dataset_manifest());
    write_file(&dir.join("dataset.csv"), &dataset)?;
    let labels: Vec<bool> = cell.experiment.test.iter().map(|e| e.true_class).collect();
    write_training(&dir, &cell.outcome, &cell.report, &labels, &cell.test_scores)?;
    let mut m = RunManifest::new("train", config);
    m.push("risk_level", cell.risk_level);
    m.push("run", cell.run);
    m.push("data_seed", cell.seeds.data);
    m.push("init_seed", cell.seeds.init);
    m.push("train_seed", cell.seeds.train);
    m.push("bootstrap_seed", cell.seeds.bootstrap);
    m.push("dataset_sha256", sha256_hex(dataset.as_bytes()));
    m.push("test_manifest_sha256", sha256_hex(test_manifest(pools).as_bytes()));
    m.push("mislabeled_fraction", cell.mislabeled_fraction());
    m.push("param_count", cell.outcome.params.len());
    record_history(&mut m, "", &cell.outcome.history);
    write_file(&dir.join("manifest"), m.to_text())?;
    Ok(dir)
}

fn train_xcorr(config: &ExperimentConfig, options: &RunOptions) -> Result<PathBuf> {
    let n = config.xcorr.risk_level;
    let data = options.install(|| xcorr_data(config))??;
    check_degenerate(options, &data)?;
    let seeds = DemoSeeds::new(config.seed, n);
    let (h, w) = data.test.dims();
    let init = ModelParams::init(config.model.net(h, w), &mut rng_from_seed(seeds.init))?;
    let mut rng = rng_from_seed(seeds.train);
    let val = crate::net::with_negative_ratio(&mut rng, &data.strong.val, 1);
    let schedule = crate::net::Schedule {
        balanced: true,
        ..config.schedule.clone()
    };
    let outcome = train(init, &data.strong.train, &val, &schedule, &mut rng)?;
    let (report, scores) = evaluate(&outcome.params, &data.test, config, seeds.bootstrap)?;
    let dir = run_dir(config, n, 0);
    write_training(&dir, &outcome, &report, data.test.labels(), &scores)?;
    let mut m = RunManifest::new("train", config);
    m.push("risk_level", n);
    m.push("run", 0);
    m.push("init_seed", seeds.init);
    m.push("train_seed", seeds.train);
    record_history(&mut m, "", &outcome.history);
    write_file(&dir.join("manifest"), m.to_text())?;
    Ok(dir)
}

/// Continues training from a checkpoint with the `[finetune]` schedule and
/// writes the result to `<run dir>/finetune`. Image experiments use the
/// cell's own training data; the video demo uses strong plus weak segments
/// with the configured negative ratio.
pub fn cmd_finetune(
    config: &ExperimentConfig,
    checkpoint: &Path,
    risk_level: usize,
    run: usize,
    options: &RunOptions,
) -> Result<PathBuf> {
    let config = options.apply(config);
    let start = load_params(checkpoint)?;
    let (dir, outcome, report, labels, scores, train_seed) = match config.kind {
        ExperimentKind::XcorrDemo => {
            let n = config.xcorr.risk_level;
            let data = options.install(|| xcorr_data(&config))??;
            check_degenerate(options, &data)?;
            let (h, w) = data.test.dims();
            crate::net::check_compatible(&start, &config.model.net(h, w))?;
            let seeds = DemoSeeds::new(config.seed, n);
            let seed = crate::seed::derive_seed(config.seed, n as u32, 0, "xcorr/finetune");
            let outcome = finetune(start.clone(), &data.strong, &data.weak, &config.two_stage(), &mut rng_from_seed(seed))?
                .unwrap_or(TrainOutcome {
                    params: start,
                    history: History::default(),
                });
            let (report, scores) = evaluate(&outcome.params, &data.test, &config, seeds.bootstrap)?;
            (run_dir(&config, n, 0), outcome, report, data.test.labels().to_vec(), scores, seed)
        }
        _ => {
            let pools = image_pools(&config)?;
            let (h, w) = pools.dims();
            crate::net::check_compatible(&start, &config.model.net(h, w))?;
            let seeds = CellSeeds::new(config.seed, risk_level, run);
            let exp = build_image_experiment(
                seeds.data,
                &config.sequence.experiment(risk_level),
                &pools.train_pos,
                &pools.train_neg,
                &pools.test,
            )?;
            let train_set = to_dataset(&exp.train)?;
            let val_set = to_dataset(&exp.val)?;
            let seed = crate::seed::derive_seed(config.seed, risk_level as u32, run as u32, "finetune");
            let schedule = weighted_schedule(&config.finetune, &train_set);
            let outcome = options.install(|| train(start, &train_set, &val_set, &schedule, &mut rng_from_seed(seed)))??;
            let test = test_dataset(&exp.test)?;
            let (report, scores) = evaluate(&outcome.params, &test, &config, seeds.bootstrap)?;
            (run_dir(&config, risk_level, run), outcome, report, test.labels().to_vec(), scores, seed)
        }
    };
    let dir = dir.join("finetune");
    write_training(&dir, &outcome, &report, &labels, &scores)?;
    let mut m = RunManifest::new("finetune", &config);
    m.push("checkpoint", checkpoint.display());
    m.push("checkpoint_sha256", sha256_hex(&std::fs::read(checkpoint).map_err(|e| Error::io(checkpoint, e))?));
    m.push("risk_level", risk_level);
    m.push("run", run);
    m.push("train_seed", train_seed);
    record_history(&mut m, "", &outcome.history);
    write_file(&dir.join("manifest"), m.to_text())?;
    Ok(dir)
}

/// Resolves manifest rows against the pools. Labels are the rows' true
/// labels; images are min-max rescaled as in training.
pub fn manifest_dataset(pools: &ImagePools, rows: &[ManifestRow]) -> Result<crate::net::Dataset> {
    let by_id: HashMap<&str, &Element> = pools
        .train_pos
        .iter()
        .chain(&pools.train_neg)
        .chain(&pools.test)
        .map(|e| (e.id.as_str(), e))
        .collect();
    let images = rows
        .iter()
        .map(|r| {
            by_id
                .get(r.sample_id.as_str())
                .map(|e| e.features.min_max_rescaled())
                .ok_or_else(|| Error::format("manifest", 0, format!("unknown sample id `{}`", r.sample_id)))
        })
        .collect::<Result<Vec<Tensor>>>()?;
    crate::net::Dataset::from_images(&images, rows.iter().map(|r| r.true_label).collect())
}

/// Scores a checkpoint on the test split, or on the rows of `manifest`
/// when given, and writes `<out>/<kind>/evaluate/{report,scores}.csv`.
pub fn cmd_evaluate(
    config: &ExperimentConfig,
    checkpoint: &Path,
    manifest: Option<&Path>,
    options: &RunOptions,
) -> Result<(PathBuf, EvalReport)> {
    let config = options.apply(config);
    let data = match config.kind {
        ExperimentKind::XcorrDemo => {
            let d = options.install(|| xcorr_data(&config))??;
            check_degenerate(options, &d)?;
            d.test
        }
        _ => {
            let pools = image_pools(&config)?;
            match manifest {
                Some(p) => manifest_dataset(&pools, &ManifestRow::parse_csv(&read_text(p)?).context(|| p.display().to_string())?)?,
                None => test_dataset(
                    &pools
                        .test
                        .iter()
                        .map(|e| Element {
                            features: e.features.min_max_rescaled(),
                            ..e.clone()
                        })
                        .collect::<Vec<_>>(),
                )?,
            }
        }
    };
    let (h, w) = data.dims();
    let params = load_params_for(checkpoint, &config.model.net(h, w))?;
    let seed = crate::seed::derive_seed(config.seed, 0, 0, "evaluate/bootstrap");
    let (report, scores) = evaluate(&params, &data, &config, seed)?;
    let dir = kind_dir(&config).join("evaluate");
    write_file(&dir.join("report.csv"), report.to_csv())?;
    write_file(&dir.join("scores.csv"), scores_csv(data.labels(), &scores))?;
    let mut m = RunManifest::new("evaluate", &config);
    m.push("checkpoint", checkpoint.display());
    if let Some(p) = manifest {
        m.push("manifest", p.display());
    }
    m.push("bootstrap_seed", seed);
    write_file(&dir.join("manifest"), m.to_text())?;
    Ok((dir, report))
}

pub const SWEEP_RESULTS_HEADER: &str =
    "risk_level,run,seed,recall,precision,f1,average_precision,auc,mislabeled_fraction";
pub const SWEEP_SUMMARY_HEADER: &str = "risk_level,metric,runs,mean,ci_lo,ci_hi";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub risk_level: usize,
    pub run: usize,
    /// Training-stage seed of the cell.
    pub seed: u64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub average_precision: f64,
    pub auc: f64,
    pub mislabeled_fraction: f64,
}

impl SweepRow {
    pub const METRICS: [&'static str; 6] = ["recall", "precision", "f1", "average_precision", "auc", "mislabeled_fraction"];

    pub fn metric(&self, name: &str) -> Option<f64> {
        Some(match name {
            "recall" => self.recall,
            "precision" => self.precision,
            "f1" => self.f1,
            "average_precision" => self.average_precision,
            "auc" => self.auc,
            "mislabeled_fraction" => self.mislabeled_fraction,
            _ => return None,
        })
    }

    fn from_cell(cell: &CellOutput) -> Self {
        Self {
            risk_level: cell.risk_level,
            run: cell.run,
            seed: cell.seeds.train,
            recall: cell.report.recall,
            precision: cell.report.precision,
            f1: cell.report.f1,
            average_precision: cell.report.average_precision,
            auc: cell.report.auc,
            mislabeled_fraction: cell.mislabeled_fraction(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub risk_level: usize,
    pub metric: String,
    pub runs: usize,
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// One row per `(N, run)`, sorted by risk level then run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{SWEEP_RESULTS_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.risk_level, r.run, r.seed, r.recall, r.precision, r.f1, r.average_precision, r.auc, r.mislabeled_fraction
            );
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(SWEEP_RESULTS_HEADER) {
            return Err(Error::format("sweep results", 0, "missing header"));
        }
        let rows = lines
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, line)| {
                let bad = || Error::format("sweep results", (i + 1) as u64, format!("bad row `{line}`"));
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 9 {
                    return Err(bad());
                }
                let num = |k: usize| f[k].parse::<f64>().map_err(|_| bad());
                Ok(SweepRow {
                    risk_level: f[0].parse().map_err(|_| bad())?,
                    run: f[1].parse().map_err(|_| bad())?,
                    seed: f[2].parse().map_err(|_| bad())?,
                    recall: num(3)?,
                    precision: num(4)?,
                    f1: num(5)?,
                    average_precision: num(6)?,
                    auc: num(7)?,
                    mislabeled_fraction: num(8)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { rows })
    }

    pub fn risk_levels(&self) -> Vec<usize> {
        let mut n: Vec<usize> = self.rows.iter().map(|r| r.risk_level).collect();
        n.dedup();
        n
    }

    pub fn values(&self, risk_level: usize, metric: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.risk_level == risk_level)
            .filter_map(|r| r.metric(metric))
            .collect()
    }

    /// Mean of `metric` over the runs at `risk_level`.
    pub fn mean(&self, risk_level: usize, metric: &str) -> Option<f64> {
        let v = self.values(risk_level, metric);
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Per-level means with percentile-bootstrap intervals over runs.
    pub fn summary(&self, config: &ExperimentConfig) -> Result<Vec<SummaryRow>> {
        let e = &config.evaluation;
        let mut out = Vec::new();
        for n in self.risk_levels() {
            let mut rng = substream(config.seed, n as u32, 0, "summary");
            for metric in SweepRow::METRICS {
                let v = self.values(n, metric);
                let mean = v.iter().sum::<f64>() / v.len() as f64;
                let ci = bootstrap_mean_ci(&mut rng, &v, e.bootstrap_resamples, e.ci_level)?;
                out.push(SummaryRow {
                    risk_level: n,
                    metric: metric.to_string(),
                    runs: v.len(),
                    mean,
                    ci_lo: ci.lo,
                    ci_hi: ci.hi,
                });
            }
        }
        Ok(out)
    }
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = format!("{SWEEP_SUMMARY_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{},{}", r.risk_level, r.metric, r.runs, r.mean, r.ci_lo, r.ci_hi);
    }
    out
}

/// Trains and evaluates every `(N, run)` cell, writes each run directory,
/// then `sweep_results.csv`, `sweep_summary.csv` and `test_manifest.csv`
/// under `<out>/<kind>`. Cells run on `options.jobs` workers; output order
/// is always sorted by `(N, run)`.
pub fn cmd_sweep(config: &ExperimentConfig, options: &RunOptions) -> Result<SweepResult> {
    let config = options.apply(config);
    if config.kind == ExperimentKind::XcorrDemo {
        return Err(Error::Config("sweep supports image experiments only; use xcorr-demo".into()));
    }
    let pools = image_pools(&config)?;
    let mut levels = config.risk_levels.clone();
    levels.sort_unstable();
    levels.dedup();
    let cells: Vec<(usize, usize)> = levels.iter().flat_map(|&n| (0..config.runs).map(move |r| (n, r))).collect();
    let rows = options.install(|| {
        cells
            .par_iter()
            .map(|&(n, run)| {
                let cell = run_image_cell(&config, &pools, n, run).context(|| format!("N={n} run={run}"))?;
                write_cell(&config, &pools, &cell)?;
                Ok(SweepRow::from_cell(&cell))
            })
            .collect::<Result<Vec<SweepRow>>>()
    })??;
    let result = SweepResult { rows };
    let dir = kind_dir(&config);
    write_file(&dir.join("test_manifest.csv"), test_manifest(&pools))?;
    write_file(&dir.join("sweep_results.csv"), result.to_csv())?;
    write_file(&dir.join("sweep_summary.csv"), summary_csv(&result.summary(&config)?))?;
    Ok(result)
}

/// Full video pipeline. Writes the run directory for the configured risk
/// level with both stages' histories and checkpoints, the test report,
/// saliency statistics and a few example matrices and saliency maps.
pub fn cmd_xcorr_demo(config: &ExperimentConfig, options: &RunOptions) -> Result<XcorrDemoOutput> {
    let mut config = options.apply(config);
    config.kind = ExperimentKind::XcorrDemo;
    let out = options.install(|| -> Result<XcorrDemoOutput> {
        let data = xcorr_data(&config)?;
        check_degenerate(options, &data)?;
        run_xcorr_demo(&config)
    })??;
    let n = config.xcorr.risk_level;
    let dir = run_dir(&config, n, 0);
    let final_outcome = out.outcome.finetuned.clone().unwrap_or_else(|| out.outcome.pretrained.clone());
    write_training(&dir, &final_outcome, &out.report, out.data.test.labels(), &out.test_scores)?;
    write_file(&dir.join("pretrain_history.csv"), out.outcome.pretrained.history.to_csv())?;
    save_params(&out.outcome.pretrained.params, &dir.join("pretrained.bin"))?;
    write_file(&dir.join("saliency_stats.csv"), out.saliency.to_csv())?;
    for class in [true, false] {
        if let Some(i) = (0..out.data.test.len()).find(|&i| out.data.test.labels()[i] == class) {
            let name = if class { "repetitive" } else { "aperiodic" };
            let image = out.data.test.image(i);
            write_matrix(&dir.join(format!("example_{name}.xcm")), &image)?;
            write_matrix(&dir.join(format!("example_{name}_saliency.xcm")), &guided_backprop(out.params(), &image)?)?;
        }
    }
    let mut m = RunManifest::new("xcorr-demo", &config);
    m.push("risk_level", n);
    m.push("init_seed", out.seeds.init);
    m.push("train_seed", out.seeds.train);
    m.push("bootstrap_seed", out.seeds.bootstrap);
    m.push("weak_positives", out.data.weak_positives);
    m.push("weak_mislabeled", out.data.weak_mislabeled);
    m.push("test_segments", out.data.test.len());
    record_history(&mut m, "pretrain_", &out.outcome.pretrained.history);
    if let Some(f) = &out.outcome.finetuned {
        record_history(&mut m, "finetune_", &f.history);
    }
    write_file(&dir.join("manifest"), m.to_text())?;
    Ok(out)
}

pub const SALIENCY_CSV_HEADER: &str = "row,col,value";

/// Guided-backprop saliency of a checkpoint for one matrix file. Writes
/// `<stem>.saliency.xcm` and `<stem>.saliency.csv` into `out_dir`.
pub fn cmd_saliency(checkpoint: &Path, input: &Path, out_dir: &Path) -> Result<(PathBuf, Tensor)> {
    let params = load_params(checkpoint)?;
    let image = read_matrix(input)?;
    let saliency = guided_backprop(&params, &image)?;
    let stem = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "input".into());
    let bin = out_dir.join(format!("{stem}.saliency.xcm"));
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_matrix(&bin, &saliency)?;
    let f = saliency.shape()[1];
    let mut csv = format!("{SALIENCY_CSV_HEADER}\n");
    for (k, v) in saliency.data().iter().enumerate() {
        let _ = writeln!(csv, "{},{},{v}", k / f, k % f);
    }
    write_file(&out_dir.join(format!("{stem}.saliency.csv")), csv)?;
    Ok((bin, saliency))
}

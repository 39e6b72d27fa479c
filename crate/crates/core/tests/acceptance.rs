//! Acceptance run: one PASS/FAIL/SKIP line per criterion.

mod common;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::oracles::{ap_exhaustive, auc_pairwise, false_positives_by_enumeration, mc_exposure, mean_and_se};
use common::{checkerboard_holds, gradcheck, load_config, tiny_sweep_config, tiny_xcorr_config, tree_differences};
use rand::Rng;
use riskseq::exposure::{exposure, ExposureParams};
use riskseq::harness::{
    cmd_evaluate, cmd_exposure, cmd_finetune, cmd_generate, cmd_saliency, cmd_sweep, cmd_train, cmd_xcorr_demo,
    mnist_available, run_dir, ExperimentConfig, RunOptions, SweepResult,
};
use riskseq::metrics::{auc, average_precision, ScoredSet};
use riskseq::net::{decode_params, encode_params, load_params, save_params, ConvNetConfig, ModelParams};
use riskseq::sampler::{
    apply_risk_labels, load_idx, make_sequence, parse_idx, write_idx, ClipPolicy, Element, IdxArray, SequenceSpec,
};
use riskseq::seed::rng_from_seed;
use riskseq::xcorr::{
    decode_matrix, encode_matrix, make_synthetic_video, read_matrix, write_matrix, xcorr_matrix, MotionKind,
    SyntheticVideoConfig,
};
use riskseq::Tensor;

const SEED: u64 = 20261015;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

struct Report {
    failed: Vec<usize>,
}

impl Report {
    fn run(&mut self, id: usize, title: &str, budget: Duration, f: impl FnOnce() -> Verdict) {
        let start = Instant::now();
        let v = f();
        let t = start.elapsed();
        let over = t > budget;
        let (status, detail) = match v {
            Verdict::Pass(d) if over => ("FAIL", format!("{d}; over the {}s budget", budget.as_secs())),
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => ("FAIL", d),
            Verdict::Skip(d) => ("SKIP", d),
        };
        if status == "FAIL" {
            self.failed.push(id);
        }
        let line = format!("criterion {id} [{title}]: {status} ({:.1}s) {detail}\n", t.as_secs_f64());
        // bypasses the test output capture
        let _ = std::io::stdout().lock().write_all(line.as_bytes());
    }
}

fn exposure_oracle() -> Verdict {
    let mut rng = rng_from_seed(SEED);
    let (mut worst, mut cases) = (0.0f64, 0);
    for alpha in [0.05, std::f64::consts::LN_2 / 5.0, 0.5] {
        for l in [1, 5] {
            let p = ExposureParams::new(alpha, l).unwrap();
            if exposure(&p, 1) != 0.0 {
                return Verdict::Fail(format!("exposure(N=1) = {} at alpha {alpha} L {l}", exposure(&p, 1)));
            }
            for n in 2..=9 {
                let (mean, se) = mc_exposure(&mut rng, p.rate_per_element(), n, 100_000);
                let z = (exposure(&p, n) - mean).abs() / se;
                worst = worst.max(z);
                cases += 1;
            }
        }
    }
    let (z_mean, z_var) = pooled_exposure_z(20);
    verdict(
        worst <= 3.0,
        format!(
            "{cases} cases, max |closed form - MC| = {worst:.2} se; N=1 exactly 0; z over 20 further seeds mean {z_mean:.3} variance {z_var:.3}"
        ),
    )
}

/// Mean and variance of the standardized closed-form error over the same
/// grid for `seeds` further seeds.
fn pooled_exposure_z(seeds: u64) -> (f64, f64) {
    let mut z = Vec::new();
    for seed in 0..seeds {
        let mut rng = rng_from_seed(seed);
        for alpha in [0.05, std::f64::consts::LN_2 / 5.0, 0.5] {
            for l in [1, 5] {
                let p = ExposureParams::new(alpha, l).unwrap();
                for n in 2..=9 {
                    let (mean, se) = mc_exposure(&mut rng, p.rate_per_element(), n, 100_000);
                    z.push((exposure(&p, n) - mean) / se);
                }
            }
        }
    }
    let (mean, _) = mean_and_se(&z);
    let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (z.len() - 1) as f64;
    (mean, var)
}

fn small_pools() -> (Vec<Element>, Vec<Element>) {
    let e = |i: usize, c: bool| Element {
        id: format!("{}/{i}", if c { "p" } else { "n" }),
        features: Tensor::new(vec![2, 2], vec![i as f64; 4]).unwrap(),
        true_class: c,
    };
    ((0..5).map(|i| e(i, true)).collect(), (0..5).map(|i| e(i, false)).collect())
}

fn mislabel_accounting() -> Verdict {
    let (pos, neg) = small_pools();
    let mut rng = rng_from_seed(SEED);
    for m in 0..=10 {
        for n in 1..=9 {
            let seq = make_sequence(&mut rng, &SequenceSpec::fixed_len(10, m), &pos, &neg).unwrap();
            let labeled = apply_risk_labels(&seq, n, ClipPolicy::Strict).unwrap();
            let bad = labeled.samples.iter().filter(|s| s.mislabeled()).count();
            if bad != false_positives_by_enumeration(m, n) {
                return Verdict::Fail(format!("M={m} N={n}: {bad} mislabeled"));
            }
        }
    }
    let fractions: Vec<f64> = (0..10_000)
        .map(|_| {
            let seq = make_sequence(&mut rng, &SequenceSpec::image_default(), &pos, &neg).unwrap();
            let r = apply_risk_labels(&seq, 9, ClipPolicy::Strict).unwrap();
            r.samples.iter().filter(|s| s.mislabeled()).count() as f64 / r.samples.len() as f64
        })
        .collect();
    let (frac, se) = mean_and_se(&fractions);
    let z = (frac - 45.0 / 99.0).abs() / se;
    verdict(
        z <= 3.0,
        format!("99-cell grid exact; N=9 fraction {frac:.4} vs 45/99 = {:.4} ({z:.2} se)", 45.0 / 99.0),
    )
}

fn gradient_check() -> Verdict {
    let mut runs: Vec<_> = (0..5)
        .map(|seed| gradcheck::check(ConvNetConfig::new(8, 8).with_filters(8, 16), seed))
        .collect();
    runs.push(gradcheck::check(ConvNetConfig::new(8, 8), 0));
    let worst = runs.iter().map(|r| r.max_rel_err).fold(0.0, f64::max);
    let checked: usize = runs.iter().map(|r| r.checked).sum();
    let skipped: usize = runs.iter().map(|r| r.skipped_kinks).sum();
    verdict(
        worst < 1e-5,
        format!(
            "8/16 filters x 5 seeds + 32/64 filters x 1 seed, {checked} coordinates ({skipped} at kinks), max rel err {worst:.2e}"
        ),
    )
}

fn metric_oracles() -> Verdict {
    let set = |s: &[f64], l: &[bool]| ScoredSet::new(s.to_vec(), l.to_vec()).unwrap();
    let scores = [0.91, 0.8, 0.55, 0.5, 0.2, 0.05];
    for mask in 0u32..64 {
        let labels: Vec<bool> = (0..6).map(|i| mask >> i & 1 == 1).collect();
        if average_precision(&set(&scores, &labels)).ok() != ap_exhaustive(&scores, &labels) {
            return Verdict::Fail(format!("AP differs on {labels:?}"));
        }
    }
    let mut rng = rng_from_seed(SEED);
    for k in 0..100 {
        let n = rng.random_range(2..=200);
        let s: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..40u32)) / 40.0).collect();
        let mut l: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        l[0] = true;
        l[1] = false;
        let (a, p) = (auc(&set(&s, &l)).unwrap(), average_precision(&set(&s, &l)).unwrap());
        if a != auc_pairwise(&s, &l).unwrap() {
            return Verdict::Fail(format!("AUC differs on set {k}"));
        }
        for t in [|x: f64| (3.0 * x).exp(), |x: f64| x * x * x + x, |x: f64| 10.0 * x - 4.0] {
            let st: Vec<f64> = s.iter().map(|&x| t(x)).collect();
            if auc(&set(&st, &l)).unwrap() != a || average_precision(&set(&st, &l)).unwrap() != p {
                return Verdict::Fail(format!("set {k} changes under a monotone transform"));
            }
        }
    }
    Verdict::Pass("64 AP labelings + 100 AUC sets exact, invariant under 3 increasing transforms".into())
}

fn level_means(result: &SweepResult, metric: &str) -> String {
    result
        .risk_levels()
        .iter()
        .map(|&n| format!("N={n}:{:.3}", result.mean(n, metric).unwrap()))
        .collect::<Vec<_>>()
        .join(" ")
}

fn default_sweep(out: &Path) -> SweepResult {
    let mut config = load_config("synthetic_seq.toml");
    config.out = out.to_path_buf();
    cmd_sweep(&config, &RunOptions::default()).unwrap()
}

fn trend(result: &SweepResult) -> Verdict {
    let m = |n, k| result.mean(n, k).unwrap();
    let gain = m(3, "recall") - m(1, "recall");
    let ap_gain = m(3, "average_precision") - m(1, "average_precision");
    verdict(
        gain >= 0.05 && ap_gain > 0.0,
        format!(
            "recall N=3 - N=1 = {gain:.4}, AP N=3 - N=1 = {ap_gain:.4}; recall {}; AP {}",
            level_means(result, "recall"),
            level_means(result, "average_precision")
        ),
    )
}

fn saturation(result: &SweepResult) -> Verdict {
    let ap = |n| result.mean(n, "average_precision").unwrap();
    let best = (2..=6).map(ap).fold(f64::NEG_INFINITY, f64::max);
    verdict(ap(9) <= best, format!("AP N=9 {:.4} vs best N in 2..6 {best:.4}", ap(9)))
}

fn mnist_check() -> Verdict {
    let Some(dir) = std::env::var_os("RISKSEQ_MNIST_DIR").map(PathBuf::from) else {
        return Verdict::Skip("set RISKSEQ_MNIST_DIR to a directory with the four MNIST IDX files".into());
    };
    if !mnist_available(&dir) {
        return Verdict::Skip(format!("MNIST IDX files not found in {}", dir.display()));
    }
    let tmp = tempfile::tempdir().unwrap();
    let mut config = load_config("mnist_1v0.toml");
    config.out = tmp.path().to_path_buf();
    config.mnist.dir = Some(dir);
    config.risk_levels = vec![1, 3];
    let result = cmd_sweep(&config, &RunOptions::default()).unwrap();
    let ap = |n| result.mean(n, "average_precision").unwrap();
    let gain = ap(3) - ap(1);
    verdict(gain >= 0.05, format!("AP N=1 {:.4}, N=3 {:.4}, gain {gain:.4}", ap(1), ap(3)))
}

fn xcorr_pipeline(out: &Path) -> Verdict {
    let v = SyntheticVideoConfig::default();
    let mut boards = 0;
    for seed in 0..100u64 {
        let period = v.period_lo + (seed as usize) % (v.period_hi - v.period_lo + 1);
        for kind in [MotionKind::Repetitive { period }, MotionKind::Aperiodic] {
            let m = xcorr_matrix(&make_synthetic_video(&mut rng_from_seed(seed), kind, &v).unwrap()).unwrap();
            for i in 0..m.size() {
                if m.get(i, i) != 1.0 || (i + 1..m.size()).any(|j| m.get(i, j) != 0.0) {
                    return Verdict::Fail(format!("seed {seed}: diagonal or upper triangle off"));
                }
            }
            if matches!(kind, MotionKind::Repetitive { .. }) && checkerboard_holds(&m, period) {
                boards += 1;
            }
        }
    }
    let mut config = load_config("xcorr_demo.toml");
    config.out = out.to_path_buf();
    let demo = cmd_xcorr_demo(&config, &RunOptions::default()).unwrap();
    let auc = demo.report.auc;
    verdict(
        boards == 100 && auc >= 0.95,
        format!(
            "diagonal 1 and upper triangle 0 on 200 videos, checkerboard {boards}/100; test AUC {auc:.4} AP {:.4} on {} segments; saliency band share repetitive {:.3} aperiodic {:.3} uniform {:.3}",
            demo.report.average_precision,
            demo.data.test.len(),
            demo.saliency.repetitive,
            demo.saliency.aperiodic,
            demo.saliency.uniform
        ),
    )
}

/// Runs `commands` twice into the same output directory and lists the
/// files that differ.
fn rerun_differences(root: &Path, config: &ExperimentConfig, commands: impl Fn(&ExperimentConfig)) -> Vec<PathBuf> {
    let mut config = config.clone();
    config.out = root.join("out");
    for name in ["first", "second"] {
        commands(&config);
        std::fs::rename(&config.out, root.join(name)).unwrap();
    }
    tree_differences(&root.join("first"), &root.join("second"))
}

fn determinism() -> Verdict {
    let serial = RunOptions::default();
    let tmp = tempfile::tempdir().unwrap();
    let mut sweep = tiny_sweep_config(tmp.path());
    sweep.runs = 3;
    sweep.schedule.max_epochs = 20;
    let jobs = |n| RunOptions { jobs: n, strict: false };
    let a = tmp.path().join("jobs1");
    let b = tmp.path().join("jobs4");
    std::fs::create_dir_all(&a).unwrap();
    std::fs::create_dir_all(&b).unwrap();
    let mut diff = rerun_differences(&a, &sweep, |c| {
        cmd_sweep(c, &jobs(1)).unwrap();
    });
    diff.extend(rerun_differences(&b, &sweep, |c| {
        cmd_sweep(c, &jobs(4)).unwrap();
    }));
    diff.extend(tree_differences(&a.join("first"), &b.join("first")));

    let image = tmp.path().join("image");
    std::fs::create_dir_all(&image).unwrap();
    diff.extend(rerun_differences(&image, &tiny_sweep_config(tmp.path()), |c| {
        cmd_exposure(c).unwrap();
        cmd_generate(c, &serial).unwrap();
        let run = cmd_train(c, 3, 1, &serial).unwrap();
        let ckpt = run.join("params.bin");
        cmd_finetune(c, &ckpt, 3, 1, &serial).unwrap();
        cmd_evaluate(c, &ckpt, None, &serial).unwrap();
        cmd_evaluate(c, &ckpt, Some(&run.join("dataset.csv")), &serial).unwrap();
    }));
    let video = tmp.path().join("video");
    std::fs::create_dir_all(&video).unwrap();
    diff.extend(rerun_differences(&video, &tiny_xcorr_config(tmp.path()), |c| {
        cmd_generate(c, &serial).unwrap();
        let run = cmd_train(c, 3, 0, &serial).unwrap();
        cmd_finetune(c, &run.join("params.bin"), 3, 0, &serial).unwrap();
        let mut demo = c.clone();
        demo.out = c.out.join("demo");
        cmd_xcorr_demo(&demo, &serial).unwrap();
        let dir = run_dir(&demo, demo.xcorr.risk_level, 0);
        cmd_saliency(&dir.join("params.bin"), &dir.join("example_repetitive.xcm"), &c.out.join("saliency")).unwrap();
        cmd_evaluate(c, &dir.join("params.bin"), None, &serial).unwrap();
    }));
    verdict(
        diff.is_empty(),
        if diff.is_empty() {
            "sweep with 1 and 4 jobs identical; exposure, generate, train, finetune, evaluate, sweep, xcorr-demo and saliency reruns byte-identical".into()
        } else {
            format!("differing files: {diff:?}")
        },
    )
}

fn round_trips() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let mut rng = rng_from_seed(SEED);
    let images = IdxArray {
        dims: vec![7, 8, 8],
        data: (0..7 * 64).map(|_| rng.random()).collect(),
    };
    let labels = IdxArray {
        dims: vec![7],
        data: (0..7).map(|_| rng.random_range(0..10)).collect(),
    };
    for (name, a) in [("images", &images), ("labels", &labels)] {
        let p = tmp.path().join(name);
        write_idx(&p, a).unwrap();
        if &load_idx(&p).unwrap() != a {
            return Verdict::Fail(format!("IDX {name} round trip differs"));
        }
    }
    let params = ModelParams::init(ConvNetConfig::new(8, 8), &mut rng).unwrap();
    let ckpt = tmp.path().join("params.bin");
    save_params(&params, &ckpt).unwrap();
    let bits = |p: &ModelParams| p.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    if bits(&load_params(&ckpt).unwrap()) != bits(&params) {
        return Verdict::Fail("checkpoint round trip differs".into());
    }
    let matrix = Tensor::new(vec![5, 5], (0..25).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
    let mpath = tmp.path().join("m.xcm");
    write_matrix(&mpath, &matrix).unwrap();
    if read_matrix(&mpath).unwrap().data() != matrix.data() {
        return Verdict::Fail("matrix round trip differs".into());
    }

    let idx_bytes = std::fs::read(tmp.path().join("images")).unwrap();
    let ckpt_bytes = encode_params(&params);
    let m_bytes = encode_matrix(&matrix).unwrap();
    let mut codes = Vec::new();
    for cut in [0, 3, 10, idx_bytes.len() - 1] {
        codes.push(parse_idx(&idx_bytes[..cut], "idx").unwrap_err().exit_code());
    }
    let mut bad_magic = idx_bytes.clone();
    bad_magic[2] = 0x42;
    codes.push(parse_idx(&bad_magic, "idx").unwrap_err().exit_code());
    for cut in [0, 7, 20, ckpt_bytes.len() - 1] {
        codes.push(decode_params(&ckpt_bytes[..cut], "ckpt").unwrap_err().exit_code());
    }
    let mut flipped = ckpt_bytes.clone();
    flipped[0] ^= 0xff;
    codes.push(decode_params(&flipped, "ckpt").unwrap_err().exit_code());
    for cut in [0, 5, m_bytes.len() - 1] {
        codes.push(decode_matrix(&m_bytes[..cut], "xcm").unwrap_err().exit_code());
    }
    let corrupt = tmp.path().join("corrupt.bin");
    std::fs::write(&corrupt, b"garbage").unwrap();
    let config = tiny_sweep_config(tmp.path());
    let cfg = tmp.path().join("config.toml");
    std::fs::write(&cfg, config.to_toml()).unwrap();
    let cli = std::process::Command::new(env!("CARGO_BIN_EXE_riskseq"))
        .args(["--config", cfg.to_str().unwrap(), "evaluate", "--checkpoint", corrupt.to_str().unwrap()])
        .status()
        .unwrap()
        .code()
        .unwrap();
    codes.push(cli);
    let all_three = codes.iter().all(|&c| c == 3);
    verdict(
        all_three,
        format!("IDX, checkpoint and matrix round trips bit-exact; {} corrupted inputs give exit codes {codes:?}", codes.len()),
    )
}

#[test]
fn acceptance_criteria() {
    let mut report = Report { failed: Vec::new() };
    let secs = Duration::from_secs;
    report.run(1, "exposure closed form vs Monte Carlo", secs(10), exposure_oracle);
    report.run(2, "mislabel accounting", secs(30), mislabel_accounting);
    report.run(3, "gradient correctness", secs(60), gradient_check);
    report.run(4, "metric oracles", secs(30), metric_oracles);

    let sweep_dir = tempfile::tempdir().unwrap();
    let mut sweep = None;
    report.run(5, "risk trend on synthetic sequences", secs(20 * 60), || {
        let result = default_sweep(sweep_dir.path());
        let v = trend(&result);
        sweep = Some(result);
        v
    });
    report.run(6, "MNIST 1 vs 0", secs(45 * 60), mnist_check);
    let sweep = sweep.unwrap();
    report.run(7, "high-risk saturation", secs(20 * 60), || saturation(&sweep));

    let demo_dir = tempfile::tempdir().unwrap();
    report.run(8, "cross-correlation pipeline", secs(10 * 60), || xcorr_pipeline(demo_dir.path()));
    report.run(9, "determinism", secs(20 * 60), determinism);
    report.run(10, "format round trips", secs(5), round_trips);
    assert!(report.failed.is_empty(), "failed criteria: {:?}", report.failed);
}

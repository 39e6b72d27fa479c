mod common;

use common::oracles::mc_exposure;
use proptest::prelude::*;
use riskseq::exposure::{
    exposure, exposure_curve, exposure_multi, mislabel_prob, parse_exposure_csv, ExposureParams, LabelSet,
};
use riskseq::harness::{cmd_exposure, ExperimentConfig, ExperimentKind};
use riskseq::seed::rng_from_seed;

proptest! {
    #[test]
    fn exposure_is_a_nondecreasing_probability(alpha in 1e-3f64..3.0, l in 1u32..8, n in 1u32..30) {
        let p = ExposureParams::new(alpha, l).unwrap();
        let (a, b) = (exposure(&p, n), exposure(&p, n + 1));
        prop_assert!((0.0..1.0).contains(&a));
        prop_assert!(b >= a);
        let faster = ExposureParams::new(alpha * 1.5, l).unwrap();
        prop_assert!(exposure(&faster, n) >= a);
    }

    #[test]
    fn exposure_is_the_mean_mislabel_probability(alpha in 1e-3f64..3.0, l in 1u32..8, n in 1u32..30) {
        let p = ExposureParams::new(alpha, l).unwrap();
        let mean = (0..n).map(|k| mislabel_prob(&p, u64::from(k))).sum::<f64>() / f64::from(n);
        prop_assert!((exposure(&p, n) - mean).abs() < 1e-12);
    }

    #[test]
    fn uniform_label_sets_reduce_to_single_label(alpha in 1e-3f64..3.0, labels in 1usize..20, n in 1u32..12) {
        let p = ExposureParams::elementwise(alpha).unwrap();
        prop_assert_eq!(exposure_multi(&p, &LabelSet::uniform(labels, n).unwrap()), exposure(&p, n));
    }

    #[test]
    fn only_the_product_alpha_l_matters(rate in 0.01f64..2.0, l in 1u32..10, n in 1u32..12) {
        let a = ExposureParams::new(rate, 1).unwrap();
        let b = ExposureParams::new(rate / f64::from(l), l).unwrap();
        prop_assert!((exposure(&a, n) - exposure(&b, n)).abs() < 1e-14);
    }
}

#[test]
fn closed_form_agrees_with_monte_carlo_survival() {
    let mut rng = rng_from_seed(5);
    for alpha in [0.05, std::f64::consts::LN_2 / 5.0, 0.5] {
        for l in [1, 5] {
            let p = ExposureParams::new(alpha, l).unwrap();
            for n in [2, 5, 9] {
                let (mean, se) = mc_exposure(&mut rng, p.rate_per_element(), n, 20_000);
                assert!((exposure(&p, n) - mean).abs() <= 4.0 * se + 1e-12, "alpha {alpha} L {l} N {n}");
            }
        }
    }
}

#[test]
fn exposure_command_writes_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ExperimentConfig::new(ExperimentKind::SyntheticSeq);
    config.out = dir.path().to_path_buf();
    config.exposure.n_max = 1;
    config.exposure.segment_lens = vec![1];
    let (path, rows) = cmd_exposure(&config).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.exposure == 0.0));

    config.exposure = Default::default();
    let (path2, rows) = cmd_exposure(&config).unwrap();
    assert_eq!(path, path2);
    let back = parse_exposure_csv(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(back, rows);
    for r in &back {
        let p = ExposureParams::new(r.alpha, r.segment_len).unwrap();
        assert_eq!(r.exposure, exposure(&p, r.risk_level));
    }
    let grid = [ExposureParams::new(0.5, 1).unwrap(), ExposureParams::new(0.1, 5).unwrap()];
    let curve = exposure_curve(&grid, 9).unwrap();
    for n in 0..9 {
        assert_eq!(curve[n].exposure, curve[9 + n].exposure);
    }
}

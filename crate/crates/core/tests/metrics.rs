mod common;

use common::oracles::{ap_exhaustive, auc_pairwise};
use proptest::prelude::*;
use rand::Rng;
use riskseq::metrics::{average_precision, auc, bootstrap_mean_ci, threshold_metrics, EvalReport, ScoredSet};
use riskseq::seed::rng_from_seed;

fn set(scores: &[f64], labels: &[bool]) -> ScoredSet {
    ScoredSet::new(scores.to_vec(), labels.to_vec()).unwrap()
}

#[test]
fn ap_matches_the_exhaustive_oracle_on_every_labeling_of_six() {
    let scores = [0.91, 0.8, 0.55, 0.5, 0.2, 0.05];
    for mask in 0u32..64 {
        let labels: Vec<bool> = (0..6).map(|i| mask >> i & 1 == 1).collect();
        match ap_exhaustive(&scores, &labels) {
            Some(expect) => assert_eq!(average_precision(&set(&scores, &labels)).unwrap(), expect, "{labels:?}"),
            None => assert!(average_precision(&set(&scores, &labels)).is_err()),
        }
    }
}

#[test]
fn auc_matches_pairwise_enumeration_on_random_sets() {
    let mut rng = rng_from_seed(11);
    for _ in 0..100 {
        let n = rng.random_range(2..=200);
        // coarse grid so that ties occur
        let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..40u32)) / 40.0).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        assert_eq!(auc(&set(&scores, &labels)).unwrap(), auc_pairwise(&scores, &labels).unwrap());
        assert_eq!(
            average_precision(&set(&scores, &labels)).unwrap(),
            ap_exhaustive(&scores, &labels).unwrap()
        );
    }
}

fn labelled_scores() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..60).prop_flat_map(|n| {
        (
            prop::collection::vec((0u32..1000).prop_map(|k| f64::from(k) / 1000.0), n),
            prop::collection::vec(any::<bool>(), n),
        )
    })
}

proptest! {
    #[test]
    fn rank_metrics_ignore_strictly_increasing_transforms((scores, labels) in labelled_scores()) {
        let transformed: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
        let (a, b) = (set(&scores, &labels), set(&transformed, &labels));
        prop_assert_eq!(average_precision(&a).ok(), average_precision(&b).ok());
        prop_assert_eq!(auc(&a).ok(), auc(&b).ok());
    }

    #[test]
    fn metrics_agree_with_oracles_and_stay_in_range((scores, labels) in labelled_scores()) {
        let s = set(&scores, &labels);
        prop_assert_eq!(average_precision(&s).ok(), ap_exhaustive(&scores, &labels));
        prop_assert_eq!(auc(&s).ok(), auc_pairwise(&scores, &labels));
        if let Ok(ap) = average_precision(&s) {
            prop_assert!((0.0..=1.0).contains(&ap));
        }
        let t = threshold_metrics(&s, 0.5);
        prop_assert!((0.0..=1.0).contains(&t.precision) && (0.0..=1.0).contains(&t.recall));
    }

    #[test]
    fn bootstrap_interval_brackets_constant_values(v in -5.0f64..5.0, n in 1usize..20) {
        let ci = bootstrap_mean_ci(&mut rng_from_seed(1), &vec![v; n], 200, 0.95).unwrap();
        prop_assert!((ci.lo - v).abs() < 1e-12 && (ci.hi - v).abs() < 1e-12);
    }
}

#[test]
fn perfect_ranking_gives_unit_scores() {
    let scores = [0.9, 0.8, 0.7, 0.3, 0.2];
    let labels = [true, true, true, false, false];
    let s = set(&scores, &labels);
    assert_eq!(average_precision(&s).unwrap(), 1.0);
    assert_eq!(auc(&s).unwrap(), 1.0);
    let r = EvalReport::compute(&s, 0.5).unwrap();
    assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
}

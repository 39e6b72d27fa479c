//! Risk labels on one sequence and the mislabeling they introduce.

use riskseq::sampler::{apply_risk_labels, make_sequence, ClipPolicy, Element, SequenceSpec};
use riskseq::seed::rng_from_seed;
use riskseq::Tensor;

fn pool(class: bool, n: usize) -> Vec<Element> {
    (0..n)
        .map(|i| Element {
            id: format!("{}/{i}", if class { "pos" } else { "neg" }),
            features: Tensor::zeros(vec![2, 2]),
            true_class: class,
        })
        .collect()
}

fn main() -> riskseq::Result<()> {
    let (pos, neg) = (pool(true, 20), pool(false, 20));
    let mut rng = rng_from_seed(7);
    let seq = make_sequence(&mut rng, &SequenceSpec::fixed_len(10, 3), &pos, &neg)?;
    let truth: String = seq.elements.iter().map(|e| if e.true_class { '+' } else { '.' }).collect();
    println!("sequence  {truth}  (label at {}, event length {})", seq.event_start, seq.event_len);
    for n in 1..=9 {
        let labeling = apply_risk_labels(&seq, n, ClipPolicy::Strict)?;
        let bad = labeling.samples.iter().filter(|s| s.mislabeled()).count();
        println!("N={n}  positives {:>2}  mislabeled {bad}", labeling.samples.len());
    }
    Ok(())
}

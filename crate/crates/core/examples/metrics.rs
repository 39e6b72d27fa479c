//! Ranking and threshold metrics with bootstrap intervals.

use riskseq::metrics::{EvalReport, ScoredSet};
use riskseq::seed::rng_from_seed;

fn main() -> riskseq::Result<()> {
    let scores = vec![0.95, 0.9, 0.8, 0.7, 0.65, 0.6, 0.4, 0.3, 0.2, 0.1];
    let labels = vec![true, true, false, true, false, true, false, false, true, false];
    let set = ScoredSet::new(scores, labels)?;
    let report = EvalReport::compute(&set, 0.5)?.with_intervals(&mut rng_from_seed(1), &set, 2000, 0.95)?;
    print!("{}", report.to_csv());
    Ok(())
}

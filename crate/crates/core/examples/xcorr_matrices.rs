//! Frame-to-frame correlation matrices of repetitive and aperiodic motion.

use riskseq::seed::rng_from_seed;
use riskseq::xcorr::{make_synthetic_video, normalize_percentile, xcorr_matrix, MotionKind, SyntheticVideoConfig};

fn main() -> riskseq::Result<()> {
    let config = SyntheticVideoConfig::default();
    for (name, kind) in [
        ("repetitive, period 4", MotionKind::Repetitive { period: 4 }),
        ("aperiodic", MotionKind::Aperiodic),
    ] {
        let m = xcorr_matrix(&make_synthetic_video(&mut rng_from_seed(3), kind, &config)?)?;
        let lags: Vec<String> = (1..=m.size() / 2).map(|l| format!("{:.2}", m.lag_mean(l).unwrap())).collect();
        println!("{name}\n  lag means 1..{}: {}", m.size() / 2, lags.join(" "));
        let n = normalize_percentile(&m)?;
        for i in 0..n.size() {
            let row: String = (0..=i)
                .map(|j| [' ', '.', ':', '+', '#'][(n.get(i, j) * 4.0).round() as usize])
                .collect();
            println!("  {row}");
        }
    }
    Ok(())
}

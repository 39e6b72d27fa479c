//! Inaccuracy exposure as the risk level grows, for element-wise and
//! segment-wise decay.

use riskseq::exposure::{calibrate_alpha, exposure, DurationUnit, ExposureParams};

fn main() -> riskseq::Result<()> {
    let half_life = calibrate_alpha(5.0, DurationUnit::Element)?;
    let grid = [
        ("alpha=0.05, L=1", ExposureParams::new(0.05, 1)?),
        ("alpha=ln2/5, L=1", ExposureParams::new(half_life, 1)?),
        ("alpha=ln2/5, L=5", ExposureParams::new(half_life, 5)?),
        ("alpha=0.5, L=1", ExposureParams::new(0.5, 1)?),
    ];
    print!("{:<18}", "N");
    for n in 1..=9 {
        print!("{n:>7}");
    }
    println!();
    for (name, p) in &grid {
        print!("{name:<18}");
        for n in 1..=9 {
            print!("{:>7.3}", exposure(p, n));
        }
        println!();
    }
    Ok(())
}

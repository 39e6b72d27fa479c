//! Trains one (risk level, run) cell on synthetic images and prints its
//! test report.

use riskseq::harness::{image_pools, run_image_cell, ExperimentConfig, ExperimentKind};

fn main() -> riskseq::Result<()> {
    let mut config = ExperimentConfig::new(ExperimentKind::SyntheticSeq);
    config.model.block1_filters = 8;
    config.model.block2_filters = 16;
    config.schedule.max_epochs = 200;
    config.schedule.patience = 20;
    let pools = image_pools(&config)?;
    for n in [1, 3] {
        let cell = run_image_cell(&config, &pools, n, 0)?;
        println!(
            "N={n}: {} epochs, selected {:?}, mislabeled fraction {:.3}",
            cell.outcome.history.epochs.len(),
            cell.outcome.history.selected_epoch(),
            cell.mislabeled_fraction()
        );
        print!("{}", cell.report.to_csv());
    }
    Ok(())
}

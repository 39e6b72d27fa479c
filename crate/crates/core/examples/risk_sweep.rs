//! A reduced risk-level sweep with per-level bootstrap summaries.

use riskseq::harness::{cmd_sweep, summary_csv, ExperimentConfig, ExperimentKind, RunOptions};

fn main() -> riskseq::Result<()> {
    let mut config = ExperimentConfig::new(ExperimentKind::SyntheticSeq);
    config.out = std::env::temp_dir().join("riskseq-example-sweep");
    config.model.block1_filters = 8;
    config.model.block2_filters = 16;
    config.risk_levels = vec![1, 3, 9];
    config.runs = 3;
    config.schedule.max_epochs = 100;
    config.schedule.patience = 20;
    let options = RunOptions { jobs: 4, strict: false };
    let result = cmd_sweep(&config, &options)?;
    print!("{}", summary_csv(&result.summary(&config)?));
    println!("run directories under {}", config.out.display());
    Ok(())
}

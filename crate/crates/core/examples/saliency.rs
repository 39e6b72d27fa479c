//! Two-stage training on a small video demo, then where the detector
//! looks on held-out segments.

use riskseq::harness::{run_xcorr_demo, ExperimentConfig, ExperimentKind};
use riskseq::net::guided_backprop;

fn main() -> riskseq::Result<()> {
    let mut config = ExperimentConfig::new(ExperimentKind::XcorrDemo);
    config.model.block1_filters = 8;
    config.model.block2_filters = 16;
    config.xcorr.train_events = 12;
    config.xcorr.test_events = 8;
    config.schedule.max_epochs = 60;
    config.finetune.max_epochs = 60;
    let out = run_xcorr_demo(&config)?;
    println!("test AUC {:.3}, AP {:.3}", out.report.auc, out.report.average_precision);
    print!("{}", out.saliency.to_csv());
    let i = (0..out.data.test.len()).find(|&i| out.data.test.labels()[i]).unwrap();
    let s = guided_backprop(out.params(), &out.data.test.image(i))?;
    let f = s.shape()[0];
    let peak = s.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for r in 0..f {
        let row: String = (0..f)
            .map(|c| [' ', '.', ':', '+', '#'][(s.data()[r * f + c].abs() / peak * 4.0).round() as usize])
            .collect();
        println!("  {row}");
    }
    Ok(())
}

//! Central finite differences through the public forward pass.

use rand::Rng;
use riskseq::net::{bce_logit_grad, loss_bce, ConvNetConfig, ModelParams};
use riskseq::seed::rng_from_seed;
use riskseq::Tensor;

pub struct GradCheck {
    pub checked: usize,
    /// Coordinates whose +/-h evaluations land in a different linear region
    /// (a ReLU flips or a max-pool winner changes) and so have no valid
    /// central difference.
    pub skipped_kinks: usize,
    pub max_rel_err: f64,
    pub frac_below_1e6: f64,
    pub worst: (usize, f64, f64),
}

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor for the relative error.
pub const REL_FLOOR: f64 = 1e-3;

fn problem(config: ConvNetConfig, seed: u64) -> (ModelParams, Tensor, Vec<bool>) {
    let mut rng = rng_from_seed(seed);
    let mut params = ModelParams::init(config, &mut rng).unwrap();
    for (name, t) in config.layer_manifest().iter().zip(params.tensors_mut()) {
        if name.0.ends_with(".bias") {
            for v in t.data_mut() {
                *v = rng.random_range(-0.1..0.1);
            }
        }
    }
    let b = 2;
    let n = b * config.input_h * config.input_w;
    let x = Tensor::new(
        vec![b, config.input_h, config.input_w, 1],
        (0..n).map(|_| rng.random_range(0.0..1.0)).collect(),
    )
    .unwrap();
    (params, x, vec![true, false])
}

pub fn check(config: ConvNetConfig, seed: u64) -> GradCheck {
    let (mut params, x, labels) = problem(config, seed);
    let pos_weight = 1.5;
    let (prob, mut cache) = params.forward(&x).unwrap();
    let region = cache.linear_region();
    let dlogits = bce_logit_grad(prob.data(), &labels, pos_weight).unwrap();
    let analytic = params.backward(&mut cache, &dlogits).unwrap().flatten();

    let eval = |params: &ModelParams| {
        let (p, cache) = params.forward(&x).unwrap();
        (loss_bce(p.data(), &labels, pos_weight).unwrap(), cache.linear_region() == region)
    };
    let (mut checked, mut skipped, mut below, mut max_rel) = (0, 0, 0, 0.0f64);
    let mut worst = (0, 0.0, 0.0);
    let mut flat = 0;
    for ti in 0..params.tensors().len() {
        for j in 0..params.tensors()[ti].len() {
            let orig = params.tensors()[ti].data()[j];
            params.tensors_mut()[ti].data_mut()[j] = orig + FD_STEP;
            let (up, same_up) = eval(&params);
            params.tensors_mut()[ti].data_mut()[j] = orig - FD_STEP;
            let (dn, same_dn) = eval(&params);
            params.tensors_mut()[ti].data_mut()[j] = orig;
            let a = analytic[flat];
            flat += 1;
            if !(same_up && same_dn) {
                skipped += 1;
                continue;
            }
            let numeric = (up - dn) / (2.0 * FD_STEP);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            checked += 1;
            if rel < 1e-6 {
                below += 1;
            }
            if rel > max_rel {
                max_rel = rel;
                worst = (flat - 1, a, numeric);
            }
        }
    }
    GradCheck {
        checked,
        skipped_kinks: skipped,
        max_rel_err: max_rel,
        frac_below_1e6: below as f64 / checked.max(1) as f64,
        worst,
    }
}

//! Weighted binary cross-entropy.

use crate::error::{Error, Result};

/// Probability clamp used inside the logarithms.
pub const PROB_EPS: f64 = 1e-12;

fn check(prob: &[f64], labels: &[bool]) -> Result<()> {
    if prob.len() != labels.len() || prob.is_empty() {
        return Err(Error::invalid(format!(
            "loss needs equal non-empty lengths, got {} probabilities and {} labels",
            prob.len(),
            labels.len()
        )));
    }
    Ok(())
}

/// `mean(-[w y ln p + (1 - y) ln(1 - p)])` with `p` clamped to `[1e-12, 1 - 1e-12]`.
pub fn loss_bce(prob: &[f64], labels: &[bool], pos_weight: f64) -> Result<f64> {
    check(prob, labels)?;
    let sum: f64 = prob
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            if y {
                -pos_weight * p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(sum / prob.len() as f64)
}

/// Derivative of [`loss_bce`] with respect to each pre-sigmoid logit, given
/// `prob = sigmoid(logit)`. Zero where the clamp is active.
pub fn bce_logit_grad(prob: &[f64], labels: &[bool], pos_weight: f64) -> Result<Vec<f64>> {
    check(prob, labels)?;
    let n = prob.len() as f64;
    Ok(prob
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            if !(PROB_EPS..=1.0 - PROB_EPS).contains(&p) {
                0.0
            } else if y {
                -pos_weight * (1.0 - p) / n
            } else {
                p / n
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::model::sigmoid;

    #[test]
    fn closed_forms() {
        assert!((loss_bce(&[0.5; 4], &[true, false, true, false], 1.0).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((loss_bce(&[0.8], &[true], 2.0).unwrap() - 0.446_287_102_628_419_5).abs() < 1e-12);
        assert!(loss_bce(&[1.0, 0.0], &[true, false], 1.0).unwrap() < 1e-10);
        assert!(loss_bce(&[0.5], &[], 1.0).is_err());
    }

    #[test]
    fn single_unit_gradient() {
        // one logistic unit z = w x: dL/dw = (sigmoid(w x) - y) x
        let (w, x) = (0.7, -1.3);
        for y in [true, false] {
            let p = sigmoid(w * x);
            let dz = bce_logit_grad(&[p], &[y], 1.0).unwrap()[0];
            assert_eq!(dz * x, (p - f64::from(u8::from(y))) * x);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let labels = [true, false, true];
        let z = [0.3, -1.2, 2.0];
        let loss = |z: &[f64]| {
            let p: Vec<f64> = z.iter().map(|&v| sigmoid(v)).collect();
            loss_bce(&p, &labels, 3.0).unwrap()
        };
        let p: Vec<f64> = z.iter().map(|&v| sigmoid(v)).collect();
        let g = bce_logit_grad(&p, &labels, 3.0).unwrap();
        for i in 0..3 {
            let (mut up, mut dn) = (z, z);
            up[i] += 1e-6;
            dn[i] -= 1e-6;
            let fd = (loss(&up) - loss(&dn)) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-8, "{fd} vs {}", g[i]);
        }
    }
}

//! Adadelta and Adam.

use serde::{Deserialize, Serialize};

use super::model::{Gradients, ModelParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerKind {
    Adadelta { rho: f64, eps: f64, lr: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adadelta() -> Self {
        OptimizerKind::Adadelta {
            rho: 0.95,
            eps: 1e-6,
            lr: 1.0,
        }
    }

    pub fn adam() -> Self {
        OptimizerKind::Adam {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-parameter running statistics. For Adadelta `first`/`second` hold the
/// squared-update and squared-gradient averages; for Adam the two moments.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    kind: OptimizerKind,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, params: &ModelParams) -> Self {
        let shadow = || params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            kind,
            step: 0,
            first: shadow(),
            second: shadow(),
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &Gradients) -> Result<()> {
        let shapes_match = params.tensors().len() == self.first.len()
            && grads.tensors().len() == self.first.len()
            && params
                .tensors()
                .iter()
                .zip(grads.tensors())
                .zip(&self.first)
                .all(|((p, g), s)| p.len() == s.len() && g.shape() == p.shape());
        if !shapes_match {
            return Err(Error::invalid("optimizer state, parameters and gradients disagree in shape"));
        }
        self.step += 1;
        let t = self.step as i32;
        for (i, (p, g)) in params.tensors_mut().iter_mut().zip(grads.tensors()).enumerate() {
            let (a, b) = (&mut self.first[i], &mut self.second[i]);
            match self.kind {
                OptimizerKind::Adadelta { rho, eps, lr } => {
                    for (((x, &g), edx), eg) in p.data_mut().iter_mut().zip(g.data()).zip(a.iter_mut()).zip(b.iter_mut()) {
                        *eg = rho * *eg + (1.0 - rho) * g * g;
                        let dx = -((*edx + eps).sqrt() / (*eg + eps).sqrt()) * g;
                        *edx = rho * *edx + (1.0 - rho) * dx * dx;
                        *x += lr * dx;
                    }
                }
                OptimizerKind::Adam { lr, beta1, beta2, eps } => {
                    let c1 = 1.0 - beta1.powi(t);
                    let c2 = 1.0 - beta2.powi(t);
                    for (((x, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(a.iter_mut()).zip(b.iter_mut()) {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        *x -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::model::ConvNetConfig;
    use crate::seed::rng_from_seed;

    fn params() -> ModelParams {
        ModelParams::init(ConvNetConfig::new(4, 4).with_filters(2, 3), &mut rng_from_seed(1)).unwrap()
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        for kind in [OptimizerKind::adadelta(), OptimizerKind::adam()] {
            let mut p = params();
            let before = p.clone();
            let mut state = OptimizerState::new(kind, &p);
            let zeros = p.zeros_like();
            for _ in 0..3 {
                state.step(&mut p, &zeros).unwrap();
            }
            assert_eq!(p, before);
        }
    }

    #[test]
    fn adam_first_step_moves_each_coordinate_by_lr() {
        let mut p = params();
        let before = p.flatten();
        let mut g = p.zeros_like();
        for (i, v) in g.tensors_mut().iter_mut().flat_map(|t| t.data_mut().iter_mut()).enumerate() {
            *v = if i % 2 == 0 { 0.3 + i as f64 * 1e-3 } else { -2.0 };
        }
        let mut state = OptimizerState::new(OptimizerKind::adam(), &p);
        state.step(&mut p, &g).unwrap();
        for ((a, b), gv) in p.flatten().iter().zip(&before).zip(g.flatten()) {
            let moved = b - a;
            let expected = 1e-3 * gv / (gv.abs() + 1e-8);
            assert!((moved - expected).abs() < 1e-15, "{moved} vs {expected}");
            assert!((moved.abs() - 1e-3).abs() < 1e-10);
        }
    }

    #[test]
    fn adadelta_first_step_closed_form() {
        // dx = -sqrt(eps) / sqrt((1 - rho) g^2 + eps) * g
        let mut p = params();
        let before = p.flatten();
        let mut g = p.zeros_like();
        g.tensors_mut()[0].data_mut()[0] = 0.5;
        let mut state = OptimizerState::new(OptimizerKind::adadelta(), &p);
        state.step(&mut p, &g).unwrap();
        let expected = -(1e-6f64).sqrt() / (0.05 * 0.25 + 1e-6f64).sqrt() * 0.5;
        assert!((p.flatten()[0] - before[0] - expected).abs() < 1e-15);
        assert_eq!(&p.flatten()[1..], &before[1..]);
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let mut p = params();
        let other = ModelParams::zeros(ConvNetConfig::new(4, 4).with_filters(3, 3)).unwrap();
        let mut state = OptimizerState::new(OptimizerKind::adam(), &p);
        assert!(state.step(&mut p, &other).is_err());
    }
}

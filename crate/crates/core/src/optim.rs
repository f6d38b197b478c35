//! First-order optimisers over a [`ParamSet`].

use serde::{Deserialize, Serialize};

use crate::error::{GibError, Result};
use crate::gnn::ParamSet;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

/// Adam (β₁ = 0.9, β₂ = 0.999, ε = 1e-8) or plain SGD, with per-parameter
/// moment state. `step` always descends; pass negated gradients to ascend.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    t: u32,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, params: &ParamSet) -> Self {
        let zeros = || params.values().iter().map(|t| Tensor::zeros(t.rows(), t.cols())).collect();
        Optimizer {
            kind,
            lr,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &[Tensor]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(GibError::contract(format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t as i32);
        let bc2 = 1.0 - BETA2.powi(self.t as i32);
        for (k, (p, g)) in params.values_mut().iter_mut().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(GibError::Dimension {
                    op: "optimizer step",
                    lhs: p.shape(),
                    rhs: g.shape(),
                });
            }
            match self.kind {
                OptimizerKind::Sgd => {
                    for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
                        *w -= self.lr * d;
                    }
                }
                OptimizerKind::Adam => {
                    let m = self.m[k].data_mut();
                    let v = self.v[k].data_mut();
                    for (i, (w, d)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                        m[i] = BETA1 * m[i] + (1.0 - BETA1) * d;
                        v[i] = BETA2 * v[i] + (1.0 - BETA2) * d * d;
                        *w -= self.lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + EPS);
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

    fn quad(kind: OptimizerKind, lr: f64) -> f64 {
        let mut p = ParamSet::new();
        p.push("x", Tensor::scalar(3.0));
        let mut opt = Optimizer::new(kind, lr, &p);
        for _ in 0..500 {
            let x = p.get(0).item();
            opt.step(&mut p, &[Tensor::scalar(2.0 * x)]).unwrap();
        }
        p.get(0).item()
    }

    #[test]
    fn minimises_a_quadratic() {
        assert!(quad(OptimizerKind::Sgd, 0.1).abs() < 1e-6);
        assert!(quad(OptimizerKind::Adam, 0.05).abs() < 1e-2);
    }

    #[test]
    fn first_adam_step_has_magnitude_lr() {
        let mut p = ParamSet::new();
        p.push("x", Tensor::scalar(1.0));
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.01, &p);
        opt.step(&mut p, &[Tensor::scalar(123.0)]).unwrap();
        assert!((p.get(0).item() - 0.99).abs() < 1e-9);
    }
}

//! First-order parameter updates.

use serde::{Deserialize, Serialize};

use super::nn::{Grads, Matrix, Params};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(crate::Error::Config(format!("unknown optimizer `{other}`"))),
        }
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Optimizer state owned by one agent. Steps minimize the loss whose gradient is given.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    t: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, params: &Params) -> Self {
        let zeros = || params.tensors().iter().map(|t| Matrix::zeros(t.raw_dim())).collect();
        match kind {
            OptimizerKind::Sgd => Optimizer {
                kind,
                t: 0,
                m: Vec::new(),
                v: Vec::new(),
            },
            OptimizerKind::Adam => Optimizer {
                kind,
                t: 0,
                m: zeros(),
                v: zeros(),
            },
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn step(&mut self, params: &mut Params, grads: &Grads, lr: f64) {
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.tensors_mut().iter_mut().zip(&grads.0) {
                    p.scaled_add(-lr, g);
                }
            }
            OptimizerKind::Adam => {
                self.t += 1;
                let bc1 = 1.0 - BETA1.powi(self.t as i32);
                let bc2 = 1.0 - BETA2.powi(self.t as i32);
                let step = lr * bc2.sqrt() / bc1;
                for (((p, g), m), v) in params
                    .tensors_mut()
                    .iter_mut()
                    .zip(&grads.0)
                    .zip(&mut self.m)
                    .zip(&mut self.v)
                {
                    ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                        *m = BETA1 * *m + (1.0 - BETA1) * g;
                        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                        *p -= step * *m / (v.sqrt() + EPS * bc2.sqrt());
                    });
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic_params() -> Params {
        Params::from_tensors(&["w"], vec![ndarray::array![[3.0, -2.0]]])
    }

    #[test]
    fn both_optimizers_descend_a_quadratic() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let mut p = quadratic_params();
            let mut opt = Optimizer::new(kind, &p);
            for _ in 0..2000 {
                let g = Grads(vec![p.get(0) * 2.0]);
                opt.step(&mut p, &g, 0.05);
            }
            assert!(p.get(0).iter().all(|v| v.abs() < 1e-3), "{kind:?}: {:?}", p.get(0));
        }
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let mut p = quadratic_params();
            let before = p.clone();
            let mut opt = Optimizer::new(kind, &p);
            let zero = p.zeros_like();
            opt.step(&mut p, &zero, 0.1);
            assert_eq!(p, before);
        }
    }
}

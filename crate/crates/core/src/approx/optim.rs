use serde::{Deserialize, Serialize};

use super::ParamVector;
use crate::error::{Error, Result};

/// `p ← p − lr·g`. A non-finite gradient aborts without touching `params`.
pub fn sgd_step(params: &mut ParamVector, grads: &[f64], lr: f64) -> Result<()> {
    check(params, grads, 0)?;
    params.update(|p| p.iter_mut().zip(grads).for_each(|(p, g)| *p -= lr * g));
    Ok(())
}

fn check(params: &ParamVector, grads: &[f64], iteration: u64) -> Result<()> {
    if grads.len() != params.len() {
        return Err(Error::Dimension {
            expected: params.len(),
            got: grads.len(),
        });
    }
    if let Some(k) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            what: format!("gradient entry {k}"),
            iteration,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerKind {
    Sgd {
        #[serde(default)]
        momentum: f64,
    },
    Adam {
        #[serde(default = "beta1")]
        beta1: f64,
        #[serde(default = "beta2")]
        beta2: f64,
        #[serde(default = "adam_eps")]
        eps: f64,
    },
}

fn beta1() -> f64 {
    0.9
}
fn beta2() -> f64 {
    0.999
}
fn adam_eps() -> f64 {
    1e-8
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Sgd { momentum: 0.0 }
    }
}

impl OptimizerKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            OptimizerKind::Sgd { momentum } if !(0.0..1.0).contains(&momentum) => {
                Err(Error::config(format!("momentum {momentum} outside [0, 1)")))
            }
            OptimizerKind::Adam { beta1, beta2, eps }
                if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) =>
            {
                Err(Error::config("adam betas must be in [0, 1) and eps positive"))
            }
            _ => Ok(()),
        }
    }
}

/// Stateful first-order optimizer for one parameter vector.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, n_params: usize) -> Self {
        let v_len = if matches!(kind, OptimizerKind::Adam { .. }) { n_params } else { 0 };
        Self {
            kind,
            lr,
            m: vec![0.0; n_params],
            v: vec![0.0; v_len],
            t: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Applies one update; `iteration` labels a non-finite-gradient error.
    pub fn step(&mut self, params: &mut ParamVector, grads: &[f64], iteration: u64) -> Result<()> {
        check(params, grads, iteration)?;
        let lr = self.lr;
        match self.kind {
            OptimizerKind::Sgd { momentum: 0.0 } => {
                params.update(|p| p.iter_mut().zip(grads).for_each(|(p, g)| *p -= lr * g));
            }
            OptimizerKind::Sgd { momentum } => {
                let m = &mut self.m;
                params.update(|p| {
                    for ((p, g), v) in p.iter_mut().zip(grads).zip(m.iter_mut()) {
                        *v = momentum * *v + g;
                        *p -= lr * *v;
                    }
                });
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                self.t += 1;
                let c1 = 1.0 - beta1.powi(self.t as i32);
                let c2 = 1.0 - beta2.powi(self.t as i32);
                let (m, v) = (&mut self.m, &mut self.v);
                params.update(|p| {
                    for k in 0..p.len() {
                        m[k] = beta1 * m[k] + (1.0 - beta1) * grads[k];
                        v[k] = beta2 * v[k] + (1.0 - beta2) * grads[k] * grads[k];
                        p[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
                    }
                });
            }
        }
        Ok(())
    }
}

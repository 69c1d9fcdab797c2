//! Expectile regression of `V`, TD regression of `Q`, and the advantage `A = Q − V`.

use crate::approx::{Model, Optimizer, OptimizerKind};
use crate::error::{Error, Result};
use crate::mdp::Transition;

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::config(format!("expectile level {tau} outside (0, 1)")));
    }
    Ok(())
}

/// `|τ − 1(u < 0)|·u²`.
pub fn expectile_loss(u: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(expectile_weight(u, tau) * u * u)
}

/// `2|τ − 1(u < 0)|·u`.
pub fn expectile_grad(u: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(2.0 * expectile_weight(u, tau) * u)
}

#[inline]
fn expectile_weight(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        1.0 - tau
    } else {
        tau
    }
}

/// Concatenated `(s, a)` input of the Q network.
pub fn sa_input(s: &[f64], a: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(s.len() + a.len());
    x.extend_from_slice(s);
    x.extend_from_slice(a);
    x
}

/// Fraction of advantages strictly above `threshold` ("good" exploration).
///
/// The threshold is a diagnostic knob, unrelated to the mixture's corruption rate.
pub fn good_exploration_fraction(advantages: &[f64], threshold: f64) -> Result<f64> {
    if advantages.is_empty() {
        return Err(Error::validation("no advantages to classify"));
    }
    let good = advantages.iter().filter(|&&a| a > threshold).count();
    Ok(good as f64 / advantages.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueHyper {
    pub tau: f64,
    pub gamma: f64,
    /// Coefficient of the soft update of the Q target; 1 copies `Q`.
    pub soft_update: f64,
    pub v_lr: f64,
    pub q_lr: f64,
    pub optimizer: OptimizerKind,
}

impl Default for ValueHyper {
    fn default() -> Self {
        Self {
            tau: 0.7,
            gamma: 0.99,
            soft_update: 0.005,
            v_lr: 3e-4,
            q_lr: 3e-4,
            optimizer: OptimizerKind::default(),
        }
    }
}

impl ValueHyper {
    pub fn validate(&self) -> Result<()> {
        check_tau(self.tau)?;
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::config(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if !(self.soft_update > 0.0 && self.soft_update <= 1.0) {
            return Err(Error::config(format!("soft update coefficient {} outside (0, 1]", self.soft_update)));
        }
        if !(self.v_lr >= 0.0 && self.q_lr >= 0.0) {
            return Err(Error::config("learning rates must be nonnegative"));
        }
        self.optimizer.validate()
    }
}

/// Critic state: live `Q`, `V`, the lagged `Q` target and the per-iteration `V_k`.
#[derive(Debug, Clone)]
pub struct ValueSnapshot {
    pub q: Model,
    pub v: Model,
    pub q_target: Model,
    pub v_k: Model,
    pub hyper: ValueHyper,
    q_opt: Optimizer,
    v_opt: Optimizer,
    iteration: u64,
}

impl ValueSnapshot {
    pub fn new(q: Model, v: Model, hyper: ValueHyper) -> Result<Self> {
        hyper.validate()?;
        if v.output_dim() != 1 || q.output_dim() != 1 {
            return Err(Error::validation("value networks must have scalar output"));
        }
        let q_opt = Optimizer::new(hyper.optimizer, hyper.q_lr, q.n_params());
        let v_opt = Optimizer::new(hyper.optimizer, hyper.v_lr, v.n_params());
        Ok(Self {
            q_target: q.clone(),
            v_k: v.clone(),
            q,
            v,
            hyper,
            q_opt,
            v_opt,
            iteration: 0,
        })
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Freezes `V_k ← V` for iteration `k`.
    pub fn begin_iteration(&mut self, k: u64) -> Result<()> {
        self.iteration = k;
        self.v_k.params_mut().copy_from(self.v.params())
    }

    /// `θ_target ← (1 − c)·θ_target + c·θ`.
    pub fn soft_update(&mut self) {
        let c = self.hyper.soft_update;
        let src = self.q.params().as_slice();
        self.q_target.params_mut().update(|t| {
            for (t, s) in t.iter_mut().zip(src) {
                *t = if c == 1.0 { *s } else { (1.0 - c) * *t + c * s };
            }
        });
    }

    pub fn q_value(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        Ok(self.q.forward(&sa_input(s, a))?[0])
    }

    pub fn v_value(&self, s: &[f64]) -> Result<f64> {
        Ok(self.v.forward(s)?[0])
    }

    /// `A(s, a) = Q_θ(s, a) − V_θ(s)`.
    pub fn advantage(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        Ok(self.q_value(s, a)? - self.v_value(s)?)
    }

    /// One step on `(1/n) Σ L₂^τ(Q_k(s, a) − V_θ(s))` with the frozen Q target.
    pub fn update_value(&mut self, batch: &[&Transition]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::validation("empty value batch"));
        }
        let n = batch.len() as f64;
        let tau = self.hyper.tau;
        let mut grad = vec![0.0; self.v.n_params()];
        let mut loss = 0.0;
        for t in batch {
            let target = self.q_target.forward(&sa_input(&t.state, &t.action))?[0];
            let (v, tape) = self.v.forward_tape(&t.state)?;
            let u = target - v[0];
            loss += expectile_weight(u, tau) * u * u;
            let dv = -2.0 * expectile_weight(u, tau) * u / n;
            self.v.backward_into(&tape, &[dv], &mut grad)?;
        }
        let loss = loss / n;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                what: "value loss".into(),
                iteration: self.iteration,
            });
        }
        self.v_opt.step(self.v.params_mut(), &grad, self.iteration)?;
        Ok(loss)
    }

    /// One step on `(1/n) Σ (r + γ·V_k(s′) − Q_θ(s, a))²`; terminal successors use `V_k(s′) = 0`.
    pub fn update_q(&mut self, batch: &[&Transition]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::validation("empty Q batch"));
        }
        let n = batch.len() as f64;
        let gamma = self.hyper.gamma;
        let mut grad = vec![0.0; self.q.n_params()];
        let mut loss = 0.0;
        for t in batch {
            let boot = if t.terminal { 0.0 } else { self.v_k.forward(&t.next_state)?[0] };
            let y = t.reward + gamma * boot;
            let (q, tape) = self.q.forward_tape(&sa_input(&t.state, &t.action))?;
            let u = y - q[0];
            loss += u * u;
            self.q.backward_into(&tape, &[-2.0 * u / n], &mut grad)?;
        }
        let loss = loss / n;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                what: "Q loss".into(),
                iteration: self.iteration,
            });
        }
        self.q_opt.step(self.q.params_mut(), &grad, self.iteration)?;
        Ok(loss)
    }
}

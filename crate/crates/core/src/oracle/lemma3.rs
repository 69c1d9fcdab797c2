use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::approx::{Arch, Model};
use crate::error::{Error, Result};
use crate::loss::RobustLoss;
use crate::mdp::{Axis, Discretizer, Transition};
use crate::policy::{policy_loss, DistributionKind, PolicySnapshot};

/// Forward-mode dual number `v + d·ε`.
#[derive(Debug, Clone, Copy)]
struct Dual {
    v: f64,
    d: f64,
}

impl Dual {
    fn constant(v: f64) -> Self {
        Dual { v, d: 0.0 }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual { v: self.v + o.v, d: self.d + o.d }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual { v: self.v - o.v, d: self.d - o.d }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual {
            v: self.v * o.v,
            d: self.v * o.d + self.d * o.v,
        }
    }
}

/// `−w·log N(a; μ, σ²I)` with `μ_j` seeded as the dual variable.
fn neg_log_likelihood(a: &[f64], mu: &[f64], sigma: f64, w: f64, seed: usize) -> Dual {
    let d = a.len() as f64;
    let norm = 0.5 * d * (2.0 * std::f64::consts::PI).ln() + d * sigma.ln();
    let inv = Dual::constant(1.0 / (2.0 * sigma * sigma));
    let mut quad = Dual::constant(0.0);
    for (j, (&aj, &mj)) in a.iter().zip(mu).enumerate() {
        let m = Dual { v: mj, d: if j == seed { 1.0 } else { 0.0 } };
        let r = Dual::constant(aj) - m;
        quad = quad + r * r;
    }
    Dual::constant(w) * (quad * inv + Dual::constant(norm))
}

/// One `(a, μ, σ, w)` probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma3Probe {
    pub action: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma3Report {
    pub probes: usize,
    /// Largest `|∇(−w log π) − ∇(w‖a−μ‖²/2σ²)| / max(1, |∇|)` over probes and coordinates.
    pub max_gradient_gap: f64,
    /// Largest spread of `−w log π − w‖a−μ‖²/2σ²` across a probe's μ perturbations.
    pub max_constant_drift: f64,
    pub holds: bool,
}

const TOL: f64 = 1e-10;

/// Compares the gradient of the weighted Gaussian negative log-likelihood with
/// the gradient of the weighted squared-error objective computed by
/// [`policy_loss`] on a single-cell tabular mean, and checks that the two
/// objectives differ by a μ-independent constant.
pub fn check_lemma3(probes: &[Lemma3Probe]) -> Result<Lemma3Report> {
    let mut gap: f64 = 0.0;
    let mut drift: f64 = 0.0;
    for p in probes {
        let d = p.action.len();
        if d == 0 || p.mu.len() != d {
            return Err(Error::Dimension { expected: d, got: p.mu.len() });
        }
        if !(p.sigma > 0.0) || !(p.weight >= 0.0) {
            return Err(Error::validation("gradient probes need σ > 0 and w ≥ 0"));
        }
        let cells = Discretizer::new(vec![Axis::integers(1)])?;
        let mut mean = Model::zeros(Arch::Tabular { cells, out_dim: d })?;
        mean.params_mut().update(|x| x.copy_from_slice(&p.mu));
        let policy = PolicySnapshot::new(mean, p.sigma, DistributionKind::GaussianFixedStd)?;
        let t = Transition {
            state: vec![0.0],
            action: p.action.clone(),
            reward: 0.0,
            next_state: vec![0.0],
            terminal: true,
            index: 0,
        };
        let (sq, grad) = policy_loss(&policy, &RobustLoss::L2, &[&t], &[p.weight])?;
        for (j, &g) in grad.iter().enumerate().take(d) {
            let nll = neg_log_likelihood(&p.action, &p.mu, p.sigma, p.weight, j);
            gap = gap.max((nll.d - g).abs() / g.abs().max(1.0));
        }
        let offset = neg_log_likelihood(&p.action, &p.mu, p.sigma, p.weight, d).v - sq;
        for shift in [-0.5, 0.25, 1.0] {
            let moved: Vec<f64> = p.mu.iter().map(|m| m + shift).collect();
            let sq_moved: f64 = p.action.iter().zip(&moved).map(|(a, m)| (a - m) * (a - m)).sum::<f64>() * p.weight
                / (2.0 * p.sigma * p.sigma);
            let other = neg_log_likelihood(&p.action, &moved, p.sigma, p.weight, d).v - sq_moved;
            drift = drift.max((other - offset).abs() / offset.abs().max(1.0));
        }
    }
    Ok(Lemma3Report {
        probes: probes.len(),
        max_gradient_gap: gap,
        max_constant_drift: drift,
        holds: gap <= TOL && drift <= TOL,
    })
}

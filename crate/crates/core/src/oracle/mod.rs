//! Exact and brute-force reference computations for the closed forms and
//! bounds behind CAWR. Used by tests and `verify-theorems`, never by training.

mod bias;
mod lemma3;
mod quad;
mod resample;
mod suite;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::DiscretePolicy;

pub use bias::{check_bias_bound, Applicability, BiasReport, Component, Weighting};
pub use lemma3::{check_lemma3, Lemma3Probe, Lemma3Report};
pub use quad::{gauss_legendre, GaussLegendre};
pub use resample::{check_lemma5_theorem3, Lemma5Entry, Lemma5Report};
pub use suite::{run_suite, CheckOutcome, SuiteConfig, TheoremReport};

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("lambda must be positive and finite, got {lambda}")))
    }
}

fn check_table(advantages: &[f64], n_states: usize, n_actions: usize) -> Result<()> {
    if advantages.len() != n_states * n_actions {
        return Err(Error::Dimension {
            expected: n_states * n_actions,
            got: advantages.len(),
        });
    }
    if advantages.iter().any(|a| !a.is_finite()) {
        return Err(Error::validation("non-finite advantage"));
    }
    Ok(())
}

/// `log Σ exp(xᵢ)` over the finite entries of `xs`; `-∞` when there are none.
pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Normalizes `exp(logits)`; entries at `-∞` get probability zero.
pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// `π*_β(a|s) ∝ π_β(a|s)·exp(A(s,a)/λ)` for one state.
pub fn constrained_row(pi_beta: &[f64], advantages: &[f64], lambda: f64) -> Vec<f64> {
    let logits: Vec<f64> = pi_beta
        .iter()
        .zip(advantages)
        .map(|(&p, &a)| if p > 0.0 { p.ln() + a / lambda } else { f64::NEG_INFINITY })
        .collect();
    softmax(&logits)
}

/// The KL-constrained optimal policy, row by row. `advantages` is row-major.
pub fn constrained_optimal_policy(pi_beta: &DiscretePolicy, advantages: &[f64], lambda: f64) -> Result<DiscretePolicy> {
    check_lambda(lambda)?;
    let (ns, na) = (pi_beta.n_states(), pi_beta.n_actions());
    check_table(advantages, ns, na)?;
    let rows = (0..ns)
        .map(|s| constrained_row(pi_beta.row(s), &advantages[s * na..(s + 1) * na], lambda))
        .collect();
    DiscretePolicy::new(rows)
}

/// The entropy-regularized optimal policy `π*(a|s) ∝ exp(A(s,a)/λ)`.
pub fn unbiased_optimal_policy(advantages: &[f64], n_actions: usize, lambda: f64) -> Result<DiscretePolicy> {
    check_lambda(lambda)?;
    if n_actions == 0 || !advantages.len().is_multiple_of(n_actions) || advantages.is_empty() {
        return Err(Error::validation("advantage table does not split into rows"));
    }
    check_table(advantages, advantages.len() / n_actions, n_actions)?;
    let rows = advantages
        .chunks(n_actions)
        .map(|row| softmax(&row.iter().map(|a| a / lambda).collect::<Vec<_>>()))
        .collect();
    DiscretePolicy::new(rows)
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// `max_s TV(p(.|s), q(.|s))`.
pub fn policy_tv(p: &DiscretePolicy, q: &DiscretePolicy) -> f64 {
    (0..p.n_states())
        .map(|s| total_variation(p.row(s), q.row(s)))
        .fold(0.0, f64::max)
}

/// `E_π[A] − λ·KL(π‖π_β)`, the Lagrangian of the KL-constrained problem for one state.
pub fn kl_lagrangian(pi: &[f64], pi_beta: &[f64], advantages: &[f64], lambda: f64) -> f64 {
    pi.iter()
        .zip(pi_beta)
        .zip(advantages)
        .map(|((&p, &b), &a)| {
            if p <= 0.0 {
                0.0
            } else if b <= 0.0 {
                f64::NEG_INFINITY
            } else {
                p * a - lambda * p * (p / b).ln()
            }
        })
        .sum()
}

/// Maximizes [`kl_lagrangian`] over the probability simplex by repeatedly
/// zooming a regular grid around the incumbent. Supports 1 to 4 actions.
pub fn simplex_grid_optimum(pi_beta: &[f64], advantages: &[f64], lambda: f64) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    let k = pi_beta.len();
    if k == 0 || k > 4 || advantages.len() != k {
        return Err(Error::validation("simplex grid search needs 1 to 4 actions"));
    }
    if k == 1 {
        return Ok(vec![1.0]);
    }
    let free = k - 1;
    let resolution = match free {
        1 => 200,
        2 => 60,
        _ => 24,
    };
    let mut lo = vec![0.0; free];
    let mut hi = vec![1.0; free];
    let mut best = vec![1.0 / k as f64; k];
    let mut best_val = kl_lagrangian(&best, pi_beta, advantages, lambda);
    let mut idx = vec![0usize; free];
    for _ in 0..40 {
        let step: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| (h - l) / resolution as f64).collect();
        idx.iter_mut().for_each(|i| *i = 0);
        loop {
            let mut cand = Vec::with_capacity(k);
            for d in 0..free {
                cand.push(lo[d] + idx[d] as f64 * step[d]);
            }
            let rest = 1.0 - cand.iter().sum::<f64>();
            if rest >= 0.0 {
                cand.push(rest);
                let v = kl_lagrangian(&cand, pi_beta, advantages, lambda);
                if v > best_val {
                    best_val = v;
                    best = cand;
                }
            }
            let mut d = 0;
            while d < free {
                idx[d] += 1;
                if idx[d] <= resolution {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == free {
                break;
            }
        }
        for d in 0..free {
            lo[d] = (best[d] - 2.0 * step[d]).max(0.0);
            hi[d] = (best[d] + 2.0 * step[d]).min(1.0);
        }
        if step.iter().all(|&s| s < 1e-13) {
            break;
        }
    }
    Ok(best)
}

/// Both sides of `D_KL(π*‖π*_β) ≥ H(π*, π_β) − H(π_β, π*)` for one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Check {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs − rhs`; `+∞` when `π_β` has zeros where `π*` does not.
    pub margin: f64,
    pub holds: bool,
}

fn cross_entropy(p: &[f64], log_q: &[f64]) -> f64 {
    p.iter()
        .zip(log_q)
        .map(|(&pi, &lq)| if pi > 0.0 { -pi * lq } else { 0.0 })
        .sum()
}

/// Evaluates the KL lower bound for one state, in log space throughout.
pub fn theorem1_row(pi_beta: &[f64], advantages: &[f64], lambda: f64) -> Theorem1Check {
    let scaled: Vec<f64> = advantages.iter().map(|a| a / lambda).collect();
    let log_z = log_sum_exp(&scaled);
    let log_star: Vec<f64> = scaled.iter().map(|x| x - log_z).collect();
    let log_beta: Vec<f64> = pi_beta.iter().map(|&p| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY }).collect();
    let tilted: Vec<f64> = log_beta.iter().zip(&scaled).map(|(b, x)| b + x).collect();
    let log_zb = log_sum_exp(&tilted);
    let star: Vec<f64> = log_star.iter().map(|l| l.exp()).collect();
    if pi_beta.iter().any(|&p| p <= 0.0) {
        return Theorem1Check {
            lhs: f64::INFINITY,
            rhs: f64::INFINITY,
            margin: f64::INFINITY,
            holds: true,
        };
    }
    let log_star_beta: Vec<f64> = tilted.iter().map(|t| t - log_zb).collect();
    let lhs: f64 = star
        .iter()
        .zip(log_star.iter().zip(&log_star_beta))
        .map(|(&p, (a, b))| if p > 0.0 { p * (a - b) } else { 0.0 })
        .sum();
    let rhs = cross_entropy(&star, &log_beta) - cross_entropy(pi_beta, &log_star);
    let margin = lhs - rhs;
    Theorem1Check {
        lhs,
        rhs,
        margin,
        holds: margin >= -1e-12,
    }
}

/// [`theorem1_row`] for every state of `pi_beta`.
pub fn check_theorem1(pi_beta: &DiscretePolicy, advantages: &[f64], lambda: f64) -> Result<Vec<Theorem1Check>> {
    check_lambda(lambda)?;
    let (ns, na) = (pi_beta.n_states(), pi_beta.n_actions());
    check_table(advantages, ns, na)?;
    Ok((0..ns)
        .map(|s| theorem1_row(pi_beta.row(s), &advantages[s * na..(s + 1) * na], lambda))
        .collect())
}

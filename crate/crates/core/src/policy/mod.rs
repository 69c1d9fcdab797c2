//! Policies, advantage weights, the weighted robust regression objective and the training loop.

mod eval;
mod train;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::approx::Model;
use crate::error::{Error, Result};
use crate::loss::RobustLoss;
use crate::mdp::Transition;
use crate::replay::{AdvantageStats, PriorityKind, PriorityScheme};

pub use eval::{best_so_far_score, evaluate_policy, ActionMode, EvalResult};
pub(crate) use eval::mean_std as mean_std_pub;
pub use train::{
    init_models, sampling_rng, train_cawr, ApproxSpec, CawrTrainer, EvalSpec, IterationReport, MetricsRow,
    TrainConfig, TrainOutcome, METRICS_HEADER,
};

/// `σ = e⁻²`, the fixed policy standard deviation.
pub fn default_sigma() -> f64 {
    (-2.0f64).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionKind {
    GaussianFixedStd,
    /// Induced by the L1 loss; `sigma` is the Laplace scale.
    LaplaceFixedScale,
}

impl DistributionKind {
    pub fn for_loss(loss: &RobustLoss) -> Self {
        if matches!(loss, RobustLoss::L1) {
            DistributionKind::LaplaceFixedScale
        } else {
            DistributionKind::GaussianFixedStd
        }
    }
}

/// `π(·|s)` with learned mean `μ_φ(s)` and fixed spread `σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySnapshot {
    pub mean: Model,
    pub sigma: f64,
    pub distribution: DistributionKind,
}

impl PolicySnapshot {
    pub fn new(mean: Model, sigma: f64, distribution: DistributionKind) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::config(format!("policy sigma must be positive, got {sigma}")));
        }
        Ok(Self {
            mean,
            sigma,
            distribution,
        })
    }

    pub fn mean_action(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.mean.forward(s)
    }

    pub fn sample<R: Rng + ?Sized>(&self, s: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let mut a = self.mean_action(s)?;
        for x in a.iter_mut() {
            let z: f64 = match self.distribution {
                DistributionKind::GaussianFixedStd => StandardNormal.sample(rng),
                DistributionKind::LaplaceFixedScale => {
                    let e: f64 = Exp1.sample(rng);
                    if rng.random::<bool>() {
                        e
                    } else {
                        -e
                    }
                }
            };
            *x += self.sigma * z;
        }
        Ok(a)
    }
}

/// `w = min(exp(c₂·(A − c₁)), w_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdvantageWeight {
    pub c1: f64,
    pub c2: f64,
    pub w_max: f64,
}

impl AdvantageWeight {
    /// `c₁ = 0`, `c₂ = 1/λ`.
    pub fn standard(lambda: f64, w_max: f64) -> Self {
        Self {
            c1: 0.0,
            c2: 1.0 / lambda,
            w_max,
        }
    }

    /// Shares the priority scheme's centering: `(μ̂_A, 1/(λσ̂_A))` for Normal,
    /// `(τ̂_A, 1/(λσ̂_A))` for Quantile, the standard form otherwise.
    pub fn for_scheme(scheme: &PriorityScheme, lambda: f64, w_max: f64, stats: Option<&AdvantageStats>) -> Self {
        let centered = match (scheme.kind, stats) {
            (PriorityKind::ExpNormal, Some(st)) => Some((st.mean, st)),
            (PriorityKind::ExpQuantile, Some(st)) => Some((st.quantile, st)),
            _ => None,
        };
        match centered {
            Some((c1, st)) if st.std > 0.0 => Self {
                c1,
                c2: 1.0 / (lambda * st.std),
                w_max,
            },
            _ => Self::standard(lambda, w_max),
        }
    }

    /// Underflow is floored at the smallest positive normal so weights stay positive.
    pub fn weight(&self, advantage: f64) -> f64 {
        (self.c2 * (advantage - self.c1)).exp().min(self.w_max).max(f64::MIN_POSITIVE)
    }
}

/// `J(φ) = (1/n) Σᵢ wᵢ/(2σ²) Σⱼ f(a_ij − μ_j(sᵢ))` and `∂J/∂φ`.
pub fn policy_loss(
    policy: &PolicySnapshot,
    loss: &RobustLoss,
    batch: &[&Transition],
    weights: &[f64],
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::validation("empty policy batch"));
    }
    if weights.len() != batch.len() {
        return Err(Error::Dimension {
            expected: batch.len(),
            got: weights.len(),
        });
    }
    let n = batch.len() as f64;
    let scale = 1.0 / (2.0 * policy.sigma * policy.sigma);
    let mut grad = vec![0.0; policy.mean.n_params()];
    let mut total = 0.0;
    let mut dmu = vec![0.0; policy.mean.output_dim()];
    for (t, &w) in batch.iter().zip(weights) {
        if t.action.len() != dmu.len() {
            return Err(Error::Dimension {
                expected: dmu.len(),
                got: t.action.len(),
            });
        }
        let (mu, tape) = policy.mean.forward_tape(&t.state)?;
        let c = w * scale;
        let mut per = 0.0;
        for j in 0..dmu.len() {
            let u = t.action[j] - mu[j];
            per += loss.value(u);
            dmu[j] = -c * loss.grad(u) / n;
        }
        total += c * per;
        policy.mean.backward_into(&tape, &dmu, &mut grad)?;
    }
    Ok((total / n, grad))
}

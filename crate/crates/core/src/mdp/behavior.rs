use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::tabular::DiscretePolicy;
use super::task::{Task, TaskState};
use crate::error::{Error, Result};

/// A stochastic behavior policy used to generate data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyDescriptor {
    /// Finite action table; requires a tabular task.
    Table { policy: DiscretePolicy },
    /// `a ~ N(mean, std² I)` regardless of state.
    Gaussian { mean: Vec<f64>, std: f64 },
    /// `a ~ N(gain·s + bias, std² I)`.
    Linear { gain: Vec<Vec<f64>>, bias: Vec<f64>, std: f64 },
}

impl PolicyDescriptor {
    /// Point mass at `action`.
    pub fn constant(action: Vec<f64>) -> Self {
        PolicyDescriptor::Gaussian { mean: action, std: 0.0 }
    }

    pub fn id(&self) -> String {
        match self {
            PolicyDescriptor::Table { policy } => format!("table{}x{}", policy.n_states(), policy.n_actions()),
            PolicyDescriptor::Gaussian { mean, std } => format!("gaussian(mean={mean:?},std={std})"),
            PolicyDescriptor::Linear { gain, bias, std } => format!("linear(gain={gain:?},bias={bias:?},std={std})"),
        }
    }

    pub fn validate(&self, task: &Task) -> Result<()> {
        let bad_std = |std: f64| !(std >= 0.0 && std.is_finite());
        match (self, task) {
            (PolicyDescriptor::Table { policy }, Task::Tabular(t)) => {
                if policy.n_states() != t.mdp.n_states() || policy.n_actions() != t.mdp.n_actions() {
                    return Err(Error::config("policy table does not match the task's MDP"));
                }
                Ok(())
            }
            (PolicyDescriptor::Table { .. }, _) => Err(Error::config("table policies need a tabular task")),
            (PolicyDescriptor::Gaussian { mean, std }, _) => {
                if mean.len() != task.action_dim() || bad_std(*std) {
                    return Err(Error::config("gaussian policy: wrong mean length or bad std"));
                }
                Ok(())
            }
            (PolicyDescriptor::Linear { gain, bias, std }, _) => {
                if gain.len() != task.action_dim()
                    || bias.len() != task.action_dim()
                    || gain.iter().any(|row| row.len() != task.state_dim())
                    || bad_std(*std)
                {
                    return Err(Error::config("linear policy: shape mismatch or bad std"));
                }
                Ok(())
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, task: &Task, state: &TaskState, rng: &mut R) -> Result<Vec<f64>> {
        match self {
            PolicyDescriptor::Table { policy } => match state {
                TaskState::Discrete(s) => {
                    let a = policy.sample_with(*s, rng.random());
                    task.action_vector(a)
                }
                TaskState::Continuous(_) => Err(Error::validation("table policy on a continuous state")),
            },
            PolicyDescriptor::Gaussian { mean, std } => Ok(mean.iter().map(|m| m + noise(*std, rng)).collect()),
            PolicyDescriptor::Linear { gain, bias, std } => {
                let obs = task.observe(state);
                Ok(gain
                    .iter()
                    .zip(bias)
                    .map(|(row, b)| row.iter().zip(&obs).map(|(k, x)| k * x).sum::<f64>() + b + noise(*std, rng))
                    .collect())
            }
        }
    }
}

fn noise<R: Rng + ?Sized>(std: f64, rng: &mut R) -> f64 {
    if std == 0.0 {
        0.0
    } else {
        let z: f64 = StandardNormal.sample(rng);
        std * z
    }
}

/// `π_β = (1 − ε)·π⁺ + ε·π⁻`: at every step the poor policy acts with probability ε.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureBehavior {
    pub good: PolicyDescriptor,
    pub poor: PolicyDescriptor,
    pub epsilon: f64,
}

impl MixtureBehavior {
    pub fn new(good: PolicyDescriptor, poor: PolicyDescriptor, epsilon: f64) -> Result<Self> {
        let m = Self { good, poor, epsilon };
        m.check_epsilon()?;
        Ok(m)
    }

    fn check_epsilon(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::config(format!("mixture epsilon {} outside [0, 1]", self.epsilon)));
        }
        Ok(())
    }

    pub fn validate(&self, task: &Task) -> Result<()> {
        self.check_epsilon()?;
        self.good.validate(task)?;
        self.poor.validate(task)
    }

    /// Draws the mixture coin first, then the chosen component's action.
    pub fn sample<R: Rng + ?Sized>(&self, task: &Task, state: &TaskState, rng: &mut R) -> Result<Vec<f64>> {
        let coin: f64 = rng.random();
        if coin < self.epsilon {
            self.poor.sample(task, state, rng)
        } else {
            self.good.sample(task, state, rng)
        }
    }

    /// Exact mixture table for tabular components.
    pub fn table(&self) -> Result<DiscretePolicy> {
        match (&self.good, &self.poor) {
            (PolicyDescriptor::Table { policy: g }, PolicyDescriptor::Table { policy: p }) => {
                let rows = g
                    .rows()
                    .into_iter()
                    .zip(p.rows())
                    .map(|(gr, pr)| {
                        gr.iter()
                            .zip(&pr)
                            .map(|(a, b)| (1.0 - self.epsilon) * a + self.epsilon * b)
                            .collect()
                    })
                    .collect();
                DiscretePolicy::new(rows)
            }
            _ => Err(Error::validation("mixture table needs two table components")),
        }
    }
}

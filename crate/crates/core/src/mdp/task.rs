use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tabular::{GridMoves, Gridworld, TabularMdp};
use crate::error::{Error, Result};

/// Maps the indices of a finite set to real vectors and back (nearest vector).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    vectors: Vec<Vec<f64>>,
}

impl Embedding {
    pub fn new(vectors: Vec<Vec<f64>>) -> Result<Self> {
        let dim = vectors.first().map(Vec::len).unwrap_or(0);
        if dim == 0 || vectors.iter().any(|v| v.len() != dim) {
            return Err(Error::validation("embedding vectors must be non-empty and equal length"));
        }
        Ok(Self { vectors })
    }

    /// `k ↦ [k]`.
    pub fn index(n: usize) -> Self {
        Self {
            vectors: (0..n).map(|k| vec![k as f64]).collect(),
        }
    }

    /// Cell `s = y·width + x ↦ [x, y]`.
    pub fn grid(width: usize, height: usize) -> Self {
        Self {
            vectors: (0..width * height)
                .map(|s| vec![(s % width) as f64, (s / width) as f64])
                .collect(),
        }
    }

    pub fn displacements(moves: GridMoves) -> Self {
        Self {
            vectors: moves
                .displacements()
                .into_iter()
                .map(|(dx, dy)| vec![dx as f64, dy as f64])
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn vector(&self, k: usize) -> &[f64] {
        &self.vectors[k]
    }

    /// Index of the nearest vector in Euclidean distance; ties go to the lowest index.
    pub fn decode(&self, x: &[f64]) -> usize {
        let mut best = (0, f64::INFINITY);
        for (k, v) in self.vectors.iter().enumerate() {
            let d: f64 = v.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.1 {
                best = (k, d);
            }
        }
        best.0
    }
}

/// A finite MDP observed through state and action embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularTask {
    pub name: String,
    pub mdp: TabularMdp,
    pub states: Embedding,
    pub actions: Embedding,
}

impl TabularTask {
    pub fn new(name: impl Into<String>, mdp: TabularMdp, states: Embedding, actions: Embedding) -> Result<Self> {
        if states.len() != mdp.n_states() || actions.len() != mdp.n_actions() {
            return Err(Error::validation("embedding sizes do not match the MDP"));
        }
        Ok(Self {
            name: name.into(),
            mdp,
            states,
            actions,
        })
    }

    /// Index embeddings on both sides.
    pub fn indexed(name: impl Into<String>, mdp: TabularMdp) -> Self {
        let (ns, na) = (mdp.n_states(), mdp.n_actions());
        Self {
            name: name.into(),
            mdp,
            states: Embedding::index(ns),
            actions: Embedding::index(na),
        }
    }

    /// Grid coordinates for states and displacement vectors for actions.
    pub fn gridworld(grid: &Gridworld) -> Result<Self> {
        Self::new(
            format!("gridworld{}x{}", grid.width, grid.height),
            grid.to_mdp()?,
            Embedding::grid(grid.width, grid.height),
            Embedding::displacements(grid.moves),
        )
    }
}

/// Stateless task with reward `−‖a − a*‖²`; every episode lasts one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bandit {
    pub target: Vec<f64>,
}

/// One-dimensional linear-quadratic regulator: `s' = a·s + b·u`, `r = −(q·s² + r·u²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lqr {
    pub a: f64,
    pub b: f64,
    pub q: f64,
    pub r: f64,
    /// Initial states are drawn uniformly from `[-init_scale, init_scale]`.
    pub init_scale: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_gamma() -> f64 {
    0.99
}

/// A task that both generates data and evaluates policies.
#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    Tabular(TabularTask),
    Bandit(Bandit),
    Lqr(Lqr),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TaskState {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Task {
    pub fn name(&self) -> String {
        match self {
            Task::Tabular(t) => t.name.clone(),
            Task::Bandit(_) => "bandit".to_string(),
            Task::Lqr(_) => "lqr1d".to_string(),
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            Task::Tabular(t) => t.states.dim(),
            Task::Bandit(_) | Task::Lqr(_) => 1,
        }
    }

    pub fn action_dim(&self) -> usize {
        match self {
            Task::Tabular(t) => t.actions.dim(),
            Task::Bandit(b) => b.target.len(),
            Task::Lqr(_) => 1,
        }
    }

    pub fn gamma(&self) -> f64 {
        match self {
            Task::Tabular(t) => t.mdp.gamma(),
            Task::Bandit(_) => 0.0,
            Task::Lqr(l) => l.gamma,
        }
    }

    /// Largest attainable one-step reward.
    pub fn r_max(&self) -> f64 {
        match self {
            Task::Tabular(t) => t.mdp.r_max(),
            Task::Bandit(_) | Task::Lqr(_) => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Task::Bandit(b) if b.target.is_empty() => Err(Error::config("bandit target must be non-empty")),
            Task::Lqr(l) if !(l.q >= 0.0 && l.r >= 0.0 && l.init_scale >= 0.0) => {
                Err(Error::config("LQR costs and init scale must be nonnegative"))
            }
            _ => Ok(()),
        }
    }

    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> TaskState {
        match self {
            Task::Tabular(t) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let init = t.mdp.initial();
                let mut pick = init.iter().rposition(|&p| p > 0.0).unwrap_or(0);
                for (s, &p) in init.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        pick = s;
                        break;
                    }
                }
                TaskState::Discrete(pick)
            }
            Task::Bandit(_) => TaskState::Continuous(vec![0.0]),
            Task::Lqr(l) => {
                let u: f64 = rng.random();
                TaskState::Continuous(vec![(2.0 * u - 1.0) * l.init_scale])
            }
        }
    }

    pub fn observe(&self, state: &TaskState) -> Vec<f64> {
        match (self, state) {
            (Task::Tabular(t), TaskState::Discrete(s)) => t.states.vector(*s).to_vec(),
            (_, TaskState::Continuous(x)) => x.clone(),
            (_, TaskState::Discrete(s)) => vec![*s as f64],
        }
    }

    /// Applies `action`; returns `(reward, next state, terminal)`.
    pub fn step<R: Rng + ?Sized>(&self, state: &TaskState, action: &[f64], rng: &mut R) -> Result<(f64, TaskState, bool)> {
        if action.len() != self.action_dim() {
            return Err(Error::Dimension {
                expected: self.action_dim(),
                got: action.len(),
            });
        }
        match (self, state) {
            (Task::Tabular(t), TaskState::Discrete(s)) => {
                let a = t.actions.decode(action);
                let reward = t.mdp.reward(*s, a);
                let u: f64 = rng.random();
                let dist = t.mdp.next_dist(*s, a);
                let mut acc = 0.0;
                let mut next = dist.iter().rposition(|&p| p > 0.0).unwrap_or(*s);
                for (s2, &p) in dist.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        next = s2;
                        break;
                    }
                }
                Ok((reward, TaskState::Discrete(next), t.mdp.is_terminal(next)))
            }
            (Task::Bandit(b), TaskState::Continuous(_)) => {
                let reward = -b.target.iter().zip(action).map(|(t, a)| (a - t) * (a - t)).sum::<f64>();
                Ok((reward, TaskState::Continuous(vec![0.0]), true))
            }
            (Task::Lqr(l), TaskState::Continuous(x)) => {
                let (s, u) = (x[0], action[0]);
                let reward = -(l.q * s * s + l.r * u * u);
                Ok((reward, TaskState::Continuous(vec![l.a * s + l.b * u]), false))
            }
            _ => Err(Error::validation("state kind does not match the task")),
        }
    }

    /// Vector form of discrete action `k` (tabular tasks only).
    pub fn action_vector(&self, k: usize) -> Result<Vec<f64>> {
        match self {
            Task::Tabular(t) if k < t.actions.len() => Ok(t.actions.vector(k).to_vec()),
            Task::Tabular(_) => Err(Error::validation(format!("action {k} out of range"))),
            _ => Err(Error::validation("discrete actions require a tabular task")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::new_rng;

    #[test]
    fn decode_nearest() {
        let e = Embedding::displacements(GridMoves::King);
        let k = e.decode(&[0.7, -0.6]);
        assert_eq!(e.vector(k), &[1.0, -1.0]);
        let k = e.decode(&[0.2, 0.4]);
        assert_eq!(e.vector(k), &[0.0, 0.0]);
    }

    #[test]
    fn bandit_reward() {
        let task = Task::Bandit(Bandit { target: vec![1.0] });
        let mut rng = new_rng(0);
        let s = task.reset(&mut rng);
        let (r, _, done) = task.step(&s, &[-1.0], &mut rng).unwrap();
        assert_eq!((r, done), (-4.0, true));
    }

    #[test]
    fn lqr_dynamics() {
        let task = Task::Lqr(Lqr {
            a: 1.0,
            b: 0.5,
            q: 1.0,
            r: 0.1,
            init_scale: 1.0,
            gamma: 0.9,
        });
        let mut rng = new_rng(0);
        let (r, s2, done) = task
            .step(&TaskState::Continuous(vec![2.0]), &[-2.0], &mut rng)
            .unwrap();
        assert!((r + 4.4).abs() < 1e-12);
        assert_eq!(s2, TaskState::Continuous(vec![1.0]));
        assert!(!done);
    }
}

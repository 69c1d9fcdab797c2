use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::tabular::{DiscretePolicy, TabularMdp};
use crate::error::{Error, Result};

/// Uniform bins over `[low, high]`; values outside are clamped to the edge bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub low: f64,
    pub high: f64,
    pub bins: usize,
}

impl Axis {
    /// One bin per integer in `0..n`.
    pub fn integers(n: usize) -> Self {
        Self {
            low: -0.5,
            high: n as f64 - 0.5,
            bins: n,
        }
    }

    /// One bin per integer in `lo..=hi`.
    pub fn integer_range(lo: i64, hi: i64) -> Self {
        Self {
            low: lo as f64 - 0.5,
            high: hi as f64 + 0.5,
            bins: (hi - lo + 1) as usize,
        }
    }

    fn bin(&self, x: f64) -> usize {
        let t = (x - self.low) / (self.high - self.low) * self.bins as f64;
        if t.is_nan() || t < 0.0 {
            0
        } else {
            (t as usize).min(self.bins - 1)
        }
    }

    fn center(&self, k: usize) -> f64 {
        self.low + (k as f64 + 0.5) * (self.high - self.low) / self.bins as f64
    }
}

/// Mixed-radix product of [`Axis`] bins; the first axis varies fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    axes: Vec<Axis>,
}

impl Discretizer {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::config("discretizer needs at least one axis"));
        }
        for ax in &axes {
            if ax.bins == 0 || !(ax.high > ax.low) {
                return Err(Error::config(format!("bad axis {ax:?}")));
            }
        }
        Ok(Self { axes })
    }

    pub fn uniform(dim: usize, low: f64, high: f64, bins: usize) -> Result<Self> {
        Self::new(vec![Axis { low, high, bins }; dim])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    /// Product discretizer over `self`'s axes followed by `other`'s.
    pub fn concat(&self, other: &Discretizer) -> Discretizer {
        let mut axes = self.axes.clone();
        axes.extend_from_slice(&other.axes);
        Discretizer { axes }
    }

    pub fn n_cells(&self) -> usize {
        self.axes.iter().map(|a| a.bins).product()
    }

    pub fn cell(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.axes.len() {
            return Err(Error::Dimension {
                expected: self.axes.len(),
                got: x.len(),
            });
        }
        let mut idx = 0;
        let mut stride = 1;
        for (ax, &v) in self.axes.iter().zip(x) {
            idx += ax.bin(v) * stride;
            stride *= ax.bins;
        }
        Ok(idx)
    }

    pub fn center(&self, mut cell: usize) -> Vec<f64> {
        self.axes
            .iter()
            .map(|ax| {
                let k = cell % ax.bins;
                cell /= ax.bins;
                ax.center(k)
            })
            .collect()
    }
}

/// Maximum-likelihood MDP estimated from a dataset.
///
/// State cells come first; index `n_state_cells` is an absorbing sink that
/// every terminal transition leads to. Unobserved pairs are flagged absent.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMdp {
    pub mdp: TabularMdp,
    /// Empirical action frequencies per visited state (uniform elsewhere).
    pub behavior: DiscretePolicy,
    /// Visit counts per `(s, a)`, row-major.
    pub counts: Vec<usize>,
    /// `(state cell, action cell)` of every transition, by dataset index.
    pub cells: Vec<(usize, usize)>,
    pub n_state_cells: usize,
}

impl EmpiricalMdp {
    pub fn sink(&self) -> usize {
        self.n_state_cells
    }

    pub fn count(&self, s: usize, a: usize) -> usize {
        self.counts[s * self.mdp.n_actions() + a]
    }

    pub fn absent_pairs(&self) -> Vec<(usize, usize)> {
        let na = self.mdp.n_actions();
        (0..self.n_state_cells)
            .flat_map(|s| (0..na).map(move |a| (s, a)))
            .filter(|&(s, a)| !self.mdp.is_present(s, a))
            .collect()
    }
}

/// Builds `M̂` from `dataset` with the given state and action discretizers.
///
/// The initial distribution is the empirical distribution of episode starts: a
/// transition starts an episode when it is the first one, follows a terminal
/// transition, or its state differs from the previous transition's successor.
pub fn empirical_mdp(dataset: &Dataset, states: &Discretizer, actions: &Discretizer, gamma: f64) -> Result<EmpiricalMdp> {
    if dataset.state_dim() != states.dim() || dataset.action_dim() != actions.dim() {
        return Err(Error::validation("discretizer dimensions do not match the dataset"));
    }
    let nc = states.n_cells();
    let ns = nc + 1;
    let na = actions.n_cells();
    let mut counts = vec![0usize; ns * na];
    let mut next_counts = vec![0usize; ns * na * ns];
    let mut reward_sums = vec![0.0; ns * na];
    let mut starts = vec![0usize; ns];
    let mut cells = Vec::with_capacity(dataset.len());

    let mut prev: Option<&super::dataset::Transition> = None;
    for t in dataset.transitions() {
        let s = states.cell(&t.state)?;
        let a = actions.cell(&t.action)?;
        let s2 = if t.terminal { nc } else { states.cell(&t.next_state)? };
        let is_start = match prev {
            None => true,
            Some(p) => p.terminal || p.next_state != t.state,
        };
        if is_start {
            starts[s] += 1;
        }
        counts[s * na + a] += 1;
        reward_sums[s * na + a] += t.reward;
        next_counts[(s * na + a) * ns + s2] += 1;
        cells.push((s, a));
        prev = Some(t);
    }

    let mut kernel = vec![vec![vec![0.0; ns]; na]; ns];
    let mut rewards = vec![vec![0.0; na]; ns];
    let mut present = vec![false; ns * na];
    let mut behavior = vec![vec![1.0 / na as f64; na]; ns];
    for s in 0..ns {
        let visits: usize = counts[s * na..(s + 1) * na].iter().sum();
        if visits > 0 {
            for a in 0..na {
                behavior[s][a] = counts[s * na + a] as f64 / visits as f64;
            }
        }
        for a in 0..na {
            let n = counts[s * na + a];
            if n == 0 {
                continue;
            }
            present[s * na + a] = true;
            rewards[s][a] = reward_sums[s * na + a] / n as f64;
            for s2 in 0..ns {
                kernel[s][a][s2] = next_counts[(s * na + a) * ns + s2] as f64 / n as f64;
            }
        }
    }
    let total_starts: usize = starts.iter().sum();
    let initial: Vec<f64> = starts.iter().map(|&c| c as f64 / total_starts as f64).collect();
    let mut terminal = vec![false; ns];
    terminal[nc] = true;

    Ok(EmpiricalMdp {
        mdp: TabularMdp::from_parts(kernel, rewards, gamma, initial, terminal, present)?,
        behavior: DiscretePolicy::with_tolerance(behavior, 1e-9)?,
        counts,
        cells,
        n_state_cells: nc,
    })
}

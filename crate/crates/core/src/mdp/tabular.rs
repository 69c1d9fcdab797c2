use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROW_TOL: f64 = 1e-9;

/// A stochastic policy over a finite action set, one probability row per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePolicy {
    n_actions: usize,
    probs: Vec<f64>,
}

impl DiscretePolicy {
    /// Validates that every row is a probability vector within `1e-9`.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_tolerance(rows, ROW_TOL)
    }

    pub fn with_tolerance(rows: Vec<Vec<f64>>, tol: f64) -> Result<Self> {
        let n_actions = rows.first().map(Vec::len).unwrap_or(0);
        if n_actions == 0 {
            return Err(Error::validation("policy needs at least one state and one action"));
        }
        let mut probs = Vec::with_capacity(rows.len() * n_actions);
        for (s, row) in rows.iter().enumerate() {
            if row.len() != n_actions {
                return Err(Error::Dimension {
                    expected: n_actions,
                    got: row.len(),
                });
            }
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::validation(format!("state {s}: negative or non-finite probability")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > tol {
                return Err(Error::validation(format!("state {s}: probabilities sum to {total}")));
            }
            probs.extend_from_slice(row);
        }
        Ok(Self { n_actions, probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    pub fn deterministic(actions: &[usize], n_actions: usize) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::validation(format!("state {s}: action {a} out of range")));
            }
            probs[s * n_actions + a] = 1.0;
        }
        Ok(Self { n_actions, probs })
    }

    pub fn n_states(&self) -> usize {
        self.probs.len() / self.n_actions
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.probs.chunks(self.n_actions).map(<[f64]>::to_vec).collect()
    }

    /// Samples an action for state `s` by inverse CDF on `u ∈ [0, 1)`.
    pub fn sample_with(&self, s: usize, u: f64) -> usize {
        let row = self.row(s);
        let mut acc = 0.0;
        for (a, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return a;
            }
        }
        row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1)
    }
}

/// A finite MDP `(S, A, p, r, γ)` with initial distribution and terminal flags.
///
/// Entering a terminal state ends an episode; such successors bootstrap with
/// value zero. Pairs flagged absent (empirical MDPs) carry no kernel row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    kernel: Vec<f64>,
    rewards: Vec<f64>,
    gamma: f64,
    initial: Vec<f64>,
    terminal: Vec<bool>,
    present: Vec<bool>,
}

impl TabularMdp {
    /// `kernel[s][a][s']`, `rewards[s][a]`.
    pub fn new(
        kernel: Vec<Vec<Vec<f64>>>,
        rewards: Vec<Vec<f64>>,
        gamma: f64,
        initial: Vec<f64>,
        terminal: Vec<bool>,
    ) -> Result<Self> {
        let n_states = kernel.len();
        let n_actions = kernel.first().map(Vec::len).unwrap_or(0);
        let present = vec![true; n_states * n_actions];
        Self::from_parts(kernel, rewards, gamma, initial, terminal, present)
    }

    pub(crate) fn from_parts(
        kernel: Vec<Vec<Vec<f64>>>,
        rewards: Vec<Vec<f64>>,
        gamma: f64,
        initial: Vec<f64>,
        terminal: Vec<bool>,
        present: Vec<bool>,
    ) -> Result<Self> {
        let n_states = kernel.len();
        let n_actions = kernel.first().map(Vec::len).unwrap_or(0);
        if n_states == 0 || n_actions == 0 {
            return Err(Error::validation("MDP needs at least one state and one action"));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::config(format!("gamma {gamma} outside [0, 1]")));
        }
        if rewards.len() != n_states || initial.len() != n_states || terminal.len() != n_states {
            return Err(Error::Dimension {
                expected: n_states,
                got: rewards.len().min(initial.len()).min(terminal.len()),
            });
        }
        let mut flat = Vec::with_capacity(n_states * n_actions * n_states);
        let mut flat_r = Vec::with_capacity(n_states * n_actions);
        for s in 0..n_states {
            if kernel[s].len() != n_actions || rewards[s].len() != n_actions {
                return Err(Error::Dimension {
                    expected: n_actions,
                    got: kernel[s].len(),
                });
            }
            for a in 0..n_actions {
                let row = &kernel[s][a];
                if row.len() != n_states {
                    return Err(Error::Dimension {
                        expected: n_states,
                        got: row.len(),
                    });
                }
                if present[s * n_actions + a] {
                    let total: f64 = row.iter().sum();
                    if row.iter().any(|&p| p < 0.0) || (total - 1.0).abs() > ROW_TOL {
                        return Err(Error::validation(format!(
                            "p(.|{s},{a}) is not a distribution (sum {total})"
                        )));
                    }
                    if !rewards[s][a].is_finite() {
                        return Err(Error::validation(format!("r({s},{a}) is not finite")));
                    }
                }
                flat.extend_from_slice(row);
                flat_r.push(rewards[s][a]);
            }
        }
        let total: f64 = initial.iter().sum();
        if initial.iter().any(|&p| p < 0.0) || (total - 1.0).abs() > ROW_TOL {
            return Err(Error::validation(format!("initial distribution sums to {total}")));
        }
        Ok(Self {
            n_states,
            n_actions,
            kernel: flat,
            rewards: flat_r,
            gamma,
            initial,
            terminal,
            present,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn is_present(&self, s: usize, a: usize) -> bool {
        self.present[s * self.n_actions + a]
    }

    /// States with at least one present action.
    pub fn has_actions(&self, s: usize) -> bool {
        (0..self.n_actions).any(|a| self.is_present(s, a))
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.n_actions + a]
    }

    pub fn r_max(&self) -> f64 {
        (0..self.n_states)
            .flat_map(|s| (0..self.n_actions).map(move |a| (s, a)))
            .filter(|&(s, a)| self.is_present(s, a))
            .map(|(s, a)| self.reward(s, a))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn next_dist(&self, s: usize, a: usize) -> &[f64] {
        let base = (s * self.n_actions + a) * self.n_states;
        &self.kernel[base..base + self.n_states]
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::config(format!("gamma {gamma} outside [0, 1]")));
        }
        Ok(Self { gamma, ..self.clone() })
    }

    /// `J(π) = Σ_s d₀(s) V^π(s)`.
    pub fn expected_return(&self, policy: &DiscretePolicy) -> Result<f64> {
        let qv = exact_q_v(self, policy)?;
        Ok(self.initial.iter().zip(&qv.v).map(|(d, v)| d * v).sum())
    }
}

/// Exact action values and state values of a policy.
#[derive(Debug, Clone, PartialEq)]
pub struct QvTables {
    pub n_actions: usize,
    pub q: Vec<f64>,
    pub v: Vec<f64>,
}

impl QvTables {
    pub fn q(&self, s: usize, a: usize) -> f64 {
        self.q[s * self.n_actions + a]
    }

    pub fn v(&self, s: usize) -> f64 {
        self.v[s]
    }

    pub fn advantage(&self, s: usize, a: usize) -> f64 {
        self.q(s, a) - self.v(s)
    }
}

/// Solves `(I − γ P_π) V = r_π` by Gaussian elimination with one refinement step.
///
/// States without any present action have value zero. For other states the
/// policy must put all of its mass on present actions.
pub fn exact_q_v(mdp: &TabularMdp, policy: &DiscretePolicy) -> Result<QvTables> {
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    if policy.n_states() != ns || policy.n_actions() != na {
        return Err(Error::Dimension {
            expected: ns * na,
            got: policy.n_states() * policy.n_actions(),
        });
    }
    for s in 0..ns {
        if !mdp.has_actions(s) {
            continue;
        }
        let row = policy.row(s);
        let total: f64 = row.iter().sum();
        if (total - 1.0).abs() > ROW_TOL || row.iter().any(|&p| p < 0.0) {
            return Err(Error::validation(format!("policy row {s} is not stochastic")));
        }
        if (0..na).any(|a| row[a] > 0.0 && !mdp.is_present(s, a)) {
            return Err(Error::validation(format!("policy puts mass on an absent action in state {s}")));
        }
    }

    // Continuation factor for bootstrapping from s'.
    let cont: Vec<f64> = (0..ns)
        .map(|s| if mdp.terminal[s] || !mdp.has_actions(s) { 0.0 } else { 1.0 })
        .collect();

    let mut a_mat = vec![0.0; ns * ns];
    let mut b = vec![0.0; ns];
    for s in 0..ns {
        a_mat[s * ns + s] = 1.0;
        if !mdp.has_actions(s) {
            continue;
        }
        for a in 0..na {
            let p = policy.prob(s, a);
            if p == 0.0 {
                continue;
            }
            b[s] += p * mdp.reward(s, a);
            for (s2, &pn) in mdp.next_dist(s, a).iter().enumerate() {
                a_mat[s * ns + s2] -= mdp.gamma * p * pn * cont[s2];
            }
        }
    }
    let mut v = solve_dense(&a_mat, &b, ns)?;
    // One step of iterative refinement keeps the Bellman residual near machine precision.
    let residual: Vec<f64> = (0..ns)
        .map(|i| b[i] - (0..ns).map(|j| a_mat[i * ns + j] * v[j]).sum::<f64>())
        .collect();
    let correction = solve_dense(&a_mat, &residual, ns)?;
    for (vi, ci) in v.iter_mut().zip(correction) {
        *vi += ci;
    }

    let mut q = vec![0.0; ns * na];
    for s in 0..ns {
        for a in 0..na {
            if !mdp.is_present(s, a) {
                q[s * na + a] = f64::NAN;
                continue;
            }
            let boot: f64 = mdp
                .next_dist(s, a)
                .iter()
                .enumerate()
                .map(|(s2, &pn)| pn * cont[s2] * v[s2])
                .sum();
            q[s * na + a] = mdp.reward(s, a) + mdp.gamma * boot;
        }
    }
    Ok(QvTables { n_actions: na, q, v })
}

fn solve_dense(a: &[f64], b: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))
            .unwrap_or(col);
        if m[pivot * n + col].abs() < 1e-14 {
            return Err(Error::validation(
                "policy evaluation system is singular (undiscounted with no terminal reach?)",
            ));
        }
        if pivot != col {
            for k in 0..n {
                m.swap(col * n + k, pivot * n + k);
            }
            x.swap(col, pivot);
        }
        let d = m[col * n + col];
        for row in col + 1..n {
            let factor = m[row * n + col] / d;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                m[row * n + k] -= factor * m[col * n + k];
            }
            x[row] -= factor * x[col];
        }
    }
    for col in (0..n).rev() {
        let tail: f64 = (col + 1..n).map(|k| m[col * n + k] * x[k]).sum();
        x[col] = (x[col] - tail) / m[col * n + col];
    }
    Ok(x)
}

/// Move sets for [`Gridworld`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMoves {
    /// Up, down, left, right and stay.
    Four,
    /// Every displacement in `{-1, 0, 1}²`, stay included.
    King,
}

impl GridMoves {
    pub fn displacements(self) -> Vec<(i64, i64)> {
        match self {
            GridMoves::Four => vec![(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)],
            GridMoves::King => {
                let mut out = Vec::with_capacity(9);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        out.push((dx, dy));
                    }
                }
                out
            }
        }
    }
}

/// A rectangular gridworld with an absorbing goal cell.
///
/// Every step costs `step_reward`; the move that enters the goal earns
/// `goal_reward` instead. With probability `slip` the agent stays put.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gridworld {
    pub width: usize,
    pub height: usize,
    pub goal: (usize, usize),
    pub moves: GridMoves,
    #[serde(default = "default_step_reward")]
    pub step_reward: f64,
    #[serde(default)]
    pub goal_reward: f64,
    #[serde(default)]
    pub slip: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_step_reward() -> f64 {
    -1.0
}

fn default_gamma() -> f64 {
    0.99
}

impl Gridworld {
    pub fn new(width: usize, height: usize, goal: (usize, usize), moves: GridMoves) -> Self {
        Self {
            width,
            height,
            goal,
            moves,
            step_reward: -1.0,
            goal_reward: 0.0,
            slip: 0.0,
            gamma: 0.99,
        }
    }

    pub fn n_states(&self) -> usize {
        self.width * self.height
    }

    pub fn cell(&self, s: usize) -> (usize, usize) {
        (s % self.width, s / self.width)
    }

    pub fn state(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    fn moved(&self, s: usize, (dx, dy): (i64, i64)) -> usize {
        let (x, y) = self.cell(s);
        let nx = (x as i64 + dx).clamp(0, self.width as i64 - 1) as usize;
        let ny = (y as i64 + dy).clamp(0, self.height as i64 - 1) as usize;
        self.state(nx, ny)
    }

    pub fn goal_state(&self) -> usize {
        self.state(self.goal.0, self.goal.1)
    }

    /// Builds the finite MDP; the start distribution is uniform over non-goal cells.
    pub fn to_mdp(&self) -> Result<TabularMdp> {
        if self.width == 0 || self.height == 0 || self.goal.0 >= self.width || self.goal.1 >= self.height {
            return Err(Error::config("gridworld goal outside the grid"));
        }
        if !(0.0..1.0).contains(&self.slip) {
            return Err(Error::config(format!("slip {} outside [0, 1)", self.slip)));
        }
        let moves = self.moves.displacements();
        let ns = self.n_states();
        let goal = self.goal_state();
        let mut kernel = vec![vec![vec![0.0; ns]; moves.len()]; ns];
        let mut rewards = vec![vec![0.0; moves.len()]; ns];
        for s in 0..ns {
            for (a, &d) in moves.iter().enumerate() {
                if s == goal {
                    kernel[s][a][s] = 1.0;
                    continue;
                }
                let target = self.moved(s, d);
                kernel[s][a][target] += 1.0 - self.slip;
                kernel[s][a][s] += self.slip;
                let p_goal = if target == goal { 1.0 - self.slip } else { 0.0 };
                rewards[s][a] = p_goal * self.goal_reward + (1.0 - p_goal) * self.step_reward;
            }
        }
        let mut initial = vec![1.0 / (ns - 1).max(1) as f64; ns];
        initial[goal] = if ns == 1 { 1.0 } else { 0.0 };
        let mut terminal = vec![false; ns];
        terminal[goal] = true;
        TabularMdp::new(kernel, rewards, self.gamma, initial, terminal)
    }

    /// Deterministic policy moving each coordinate toward the goal.
    pub fn toward_goal_policy(&self) -> DiscretePolicy {
        self.sign_policy(1)
    }

    /// Deterministic policy moving each coordinate away from the goal. When a
    /// coordinate already matches the goal it moves in the negative direction.
    pub fn away_from_goal_policy(&self) -> DiscretePolicy {
        self.sign_policy(-1)
    }

    fn sign_policy(&self, dir: i64) -> DiscretePolicy {
        let moves = self.moves.displacements();
        let actions: Vec<usize> = (0..self.n_states())
            .map(|s| {
                let (x, y) = self.cell(s);
                let sx = (self.goal.0 as i64 - x as i64).signum();
                let sy = (self.goal.1 as i64 - y as i64).signum();
                let want = if dir > 0 {
                    (sx, sy)
                } else {
                    (if sx == 0 { -1 } else { -sx }, if sy == 0 { -1 } else { -sy })
                };
                // With only axis moves, pick the horizontal component first.
                let want = match self.moves {
                    GridMoves::King => want,
                    GridMoves::Four if want.0 != 0 => (want.0, 0),
                    GridMoves::Four => (0, want.1),
                };
                moves.iter().position(|&m| m == want).unwrap_or(0)
            })
            .collect();
        DiscretePolicy::deterministic(&actions, moves.len()).expect("actions in range")
    }
}

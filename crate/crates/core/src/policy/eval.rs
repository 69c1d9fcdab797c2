use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PolicySnapshot;
use crate::error::{Error, Result};
use crate::mdp::{new_rng, Task};
use crate::par::{self, Mode};

/// How the evaluated policy picks actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionMode {
    #[default]
    Mean,
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Mean undiscounted return.
    pub mean_return: f64,
    /// Population standard deviation of the undiscounted returns.
    pub std_return: f64,
    pub returns: Vec<f64>,
    pub discounted_returns: Vec<f64>,
}

fn episode_rng(seed: u64, episode: usize) -> ChaCha8Rng {
    let mut rng = new_rng(seed);
    rng.set_stream(episode as u64 + 1);
    rng
}

/// Rolls out `n_episodes` episodes of at most `horizon` steps.
///
/// Episode `e` draws from its own stream of `seed`, so results do not depend
/// on the execution mode.
pub fn evaluate_policy(
    policy: &PolicySnapshot,
    task: &Task,
    n_episodes: usize,
    horizon: usize,
    seed: u64,
    action_mode: ActionMode,
    mode: Mode,
) -> Result<EvalResult> {
    if n_episodes == 0 {
        return Err(Error::validation("evaluation needs at least one episode"));
    }
    if horizon == 0 {
        return Err(Error::validation("evaluation horizon must be at least 1"));
    }
    let gamma = task.gamma();
    let outcomes = par::map_range_with(mode, n_episodes, |e| -> Result<(f64, f64)> {
        let mut rng = episode_rng(seed, e);
        let mut state = task.reset(&mut rng);
        let (mut ret, mut disc_ret, mut disc) = (0.0, 0.0, 1.0);
        for _ in 0..horizon {
            let obs = task.observe(&state);
            let action = match action_mode {
                ActionMode::Mean => policy.mean_action(&obs)?,
                ActionMode::Sample => policy.sample(&obs, &mut rng)?,
            };
            let (r, next, done) = task.step(&state, &action, &mut rng)?;
            ret += r;
            disc_ret += disc * r;
            disc *= gamma;
            if done {
                break;
            }
            state = next;
        }
        Ok((ret, disc_ret))
    });
    let mut returns = Vec::with_capacity(n_episodes);
    let mut discounted_returns = Vec::with_capacity(n_episodes);
    for o in outcomes {
        let (r, d) = o?;
        returns.push(r);
        discounted_returns.push(d);
    }
    let (mean_return, std_return) = mean_std(&returns);
    Ok(EvalResult {
        mean_return,
        std_return,
        returns,
        discounted_returns,
    })
}

pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `score_k = max_{i ≤ k} score_i`.
pub fn best_so_far_score(history: &[f64]) -> Vec<f64> {
    history
        .iter()
        .scan(f64::NEG_INFINITY, |best, &s| {
            *best = best.max(s);
            Some(*best)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::Model;
    use crate::mdp::{exact_q_v, Axis, Bandit, Discretizer, GridMoves, Gridworld, TabularTask};
    use crate::policy::DistributionKind;

    #[test]
    fn running_max() {
        assert_eq!(best_so_far_score(&[3.0, 1.0, 5.0]), vec![3.0, 3.0, 5.0]);
        assert_eq!(best_so_far_score(&[2.0, 2.0]), vec![2.0, 2.0]);
        assert_eq!(best_so_far_score(&[-1.0]), vec![-1.0]);
    }

    #[test]
    fn deterministic_env_has_zero_std() {
        let task = Task::Bandit(Bandit { target: vec![1.0] });
        let m = Model::tabular(Discretizer::new(vec![Axis::integers(1)]).unwrap(), 1, 0.5).unwrap();
        let pol = PolicySnapshot::new(m, 0.1, DistributionKind::GaussianFixedStd).unwrap();
        let res = evaluate_policy(&pol, &task, 10, 1, 0, ActionMode::Mean, Mode::Sequential).unwrap();
        assert_eq!(res.std_return, 0.0);
        assert!((res.mean_return + 0.25).abs() < 1e-15);
        assert!(evaluate_policy(&pol, &task, 0, 1, 0, ActionMode::Mean, Mode::Sequential).is_err());
    }

    #[test]
    fn modes_agree() {
        let task = Task::Bandit(Bandit { target: vec![0.0] });
        let m = Model::tabular(Discretizer::new(vec![Axis::integers(1)]).unwrap(), 1, 0.2).unwrap();
        let pol = PolicySnapshot::new(m, 0.3, DistributionKind::GaussianFixedStd).unwrap();
        let a = evaluate_policy(&pol, &task, 64, 1, 4, ActionMode::Sample, Mode::Sequential).unwrap();
        let b = evaluate_policy(&pol, &task, 64, 1, 4, ActionMode::Sample, Mode::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gridworld_optimal_policy_matches_dp() {
        let mut grid = Gridworld::new(4, 4, (3, 3), GridMoves::King);
        grid.slip = 0.2;
        grid.gamma = 0.9;
        let tt = TabularTask::gridworld(&grid).unwrap();
        let toward = grid.toward_goal_policy();
        let mdp = tt.mdp.clone();
        let qv = exact_q_v(&mdp, &toward).unwrap();
        let j: f64 = mdp.initial().iter().zip(&qv.v).map(|(d, v)| d * v).sum();
        // Greedy mean policy: a tabular table holding each state's chosen displacement.
        let cells = Discretizer::new(vec![Axis::integers(4), Axis::integers(4)]).unwrap();
        let mut m = Model::tabular(cells, 2, 0.0).unwrap();
        let moves = GridMoves::King.displacements();
        m.params_mut().update(|p| {
            for s in 0..16 {
                let a = (0..moves.len()).find(|&a| toward.prob(s, a) == 1.0).unwrap();
                p[2 * s] = moves[a].0 as f64;
                p[2 * s + 1] = moves[a].1 as f64;
            }
        });
        let pol = PolicySnapshot::new(m, 0.1, DistributionKind::GaussianFixedStd).unwrap();
        let task = Task::Tabular(tt);
        let res = evaluate_policy(&pol, &task, 4000, 200, 1, ActionMode::Mean, Mode::default()).unwrap();
        let (mean, sd) = mean_std(&res.discounted_returns);
        let se = sd / (4000f64).sqrt();
        assert!((mean - j).abs() <= 3.0 * se, "{mean} vs {j} (se {se})");
    }
}

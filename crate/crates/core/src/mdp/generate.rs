use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::behavior::MixtureBehavior;
use super::dataset::{Dataset, DatasetMeta, Transition};
use super::task::Task;
use crate::error::{Error, Result};

/// The crate-wide seeded generator (portable, reproducible stream).
pub fn new_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Rolls out `n_episodes` episodes of at most `horizon` steps under the mixture.
///
/// The result is a pure function of the arguments.
pub fn generate_dataset(
    task: &Task,
    behavior: &MixtureBehavior,
    n_episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<Dataset> {
    task.validate()?;
    behavior.validate(task)?;
    if n_episodes == 0 || horizon == 0 {
        return Err(Error::config("n_episodes and horizon must be at least 1"));
    }
    let mut rng = new_rng(seed);
    let mut transitions = Vec::new();
    for _ in 0..n_episodes {
        let mut state = task.reset(&mut rng);
        for _ in 0..horizon {
            let action = behavior.sample(task, &state, &mut rng)?;
            let (reward, next, done) = task.step(&state, &action, &mut rng)?;
            transitions.push(Transition {
                state: task.observe(&state),
                action,
                reward,
                next_state: task.observe(&next),
                terminal: done,
                index: transitions.len(),
            });
            if done {
                break;
            }
            state = next;
        }
    }
    let meta = DatasetMeta {
        state_dim: task.state_dim(),
        action_dim: task.action_dim(),
        epsilon: Some(behavior.epsilon),
        seed: Some(seed),
        r_max: Some(task.r_max()),
        task: Some(task.name()),
        policy_ids: vec![format!("good:{}", behavior.good.id()), format!("poor:{}", behavior.poor.id())],
    };
    Dataset::new(transitions, meta)
}

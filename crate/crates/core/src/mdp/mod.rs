//! Transitions, datasets, finite MDPs and the corrupted-dataset generator.

mod behavior;
mod dataset;
mod empirical;
mod generate;
mod tabular;
mod task;

pub use behavior::{MixtureBehavior, PolicyDescriptor};
pub use dataset::{Dataset, DatasetMeta, Transition};
pub use empirical::{empirical_mdp, Axis, Discretizer, EmpiricalMdp};
pub use generate::{generate_dataset, new_rng};
pub use tabular::{exact_q_v, DiscretePolicy, GridMoves, Gridworld, QvTables, TabularMdp};
pub use task::{Bandit, Embedding, Lqr, TabularTask, Task, TaskState};

//! Configuration, dataset ingest, experiment orchestration and normalized scores.

mod config;
mod run;
mod score;

pub use config::{
    ApproxConfig, BehaviorSpec, DataConfig, EvalConfig, ExperimentConfig, LossConfig, LossName, PriorityConfig,
    Profile, ResolvedExperiment, TaskSpec, TrainSection,
};
pub use run::{ablate, aggregate_rows, ingest_dataset, run_experiment, AblationCell, AggregatePoint, RunSummary, SeedFailure};
pub use score::{normalized_score, ScoreEntry, ScoreTable};

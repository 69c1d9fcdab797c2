use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::score::{ScoreEntry, ScoreTable};
use crate::approx::OptimizerKind;
use crate::error::{Error, Result};
use crate::loss::{RobustLoss, DEFAULT_KAPPA};
use crate::mdp::{
    generate_dataset, Axis, Bandit, Dataset, Discretizer, DiscretePolicy, GridMoves, Gridworld, Lqr,
    MixtureBehavior, PolicyDescriptor, TabularTask, Task,
};
use crate::policy::{default_sigma, ActionMode, ApproxSpec, TrainConfig};
use crate::replay::{PriorityKind, PriorityScheme, StatsMode};
use crate::value::ValueHyper;

/// Named defaults for run length and cadence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// 20 000 iterations, evaluation every 500.
    #[default]
    Desk,
    /// 400 000 iterations, evaluation every 10 000.
    Paper,
}

impl Profile {
    pub fn iterations(self) -> u64 {
        match self {
            Profile::Desk => 20_000,
            Profile::Paper => 400_000,
        }
    }

    pub fn eval_every(self) -> u64 {
        match self {
            Profile::Desk => 500,
            Profile::Paper => 10_000,
        }
    }

    pub fn seeds(self) -> Vec<u64> {
        vec![0, 1, 2]
    }
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(Error::config(format!("unknown profile `{other}` (expected desk or paper)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskSpec {
    /// One state, reward `−‖a − target‖²`, one-step episodes.
    Bandit { target: Vec<f64> },
    /// Grid with coordinate states and displacement-vector actions.
    Gridworld {
        width: usize,
        height: usize,
        goal: [usize; 2],
        #[serde(default = "king")]
        moves: GridMoves,
        #[serde(default)]
        slip: f64,
        #[serde(default = "minus_one")]
        step_reward: f64,
        #[serde(default)]
        goal_reward: f64,
        #[serde(default = "gamma99")]
        gamma: f64,
    },
    Lqr {
        a: f64,
        b: f64,
        q: f64,
        r: f64,
        init_scale: f64,
        #[serde(default = "gamma99")]
        gamma: f64,
    },
    /// Dataset-only task without a simulator; no evaluation is possible.
    External { name: String },
}

fn king() -> GridMoves {
    GridMoves::King
}
fn minus_one() -> f64 {
    -1.0
}
fn gamma99() -> f64 {
    0.99
}

impl TaskSpec {
    pub fn name(&self) -> String {
        match self {
            TaskSpec::External { name } => name.clone(),
            TaskSpec::Bandit { .. } => "bandit".into(),
            TaskSpec::Gridworld { width, height, .. } => format!("gridworld{width}x{height}"),
            TaskSpec::Lqr { .. } => "lqr1d".into(),
        }
    }

    pub fn gridworld(&self) -> Option<Gridworld> {
        match *self {
            TaskSpec::Gridworld {
                width,
                height,
                goal,
                moves,
                slip,
                step_reward,
                goal_reward,
                gamma,
            } => {
                let mut g = Gridworld::new(width, height, (goal[0], goal[1]), moves);
                g.slip = slip;
                g.step_reward = step_reward;
                g.goal_reward = goal_reward;
                g.gamma = gamma;
                Some(g)
            }
            _ => None,
        }
    }

    /// The simulator, or `None` for external datasets.
    pub fn build(&self) -> Result<Option<Task>> {
        let task = match self {
            TaskSpec::External { .. } => return Ok(None),
            TaskSpec::Bandit { target } => Task::Bandit(Bandit { target: target.clone() }),
            TaskSpec::Gridworld { .. } => Task::Tabular(TabularTask::gridworld(&self.gridworld().unwrap())?),
            &TaskSpec::Lqr {
                a,
                b,
                q,
                r,
                init_scale,
                gamma,
            } => Task::Lqr(Lqr {
                a,
                b,
                q,
                r,
                init_scale,
                gamma,
            }),
        };
        task.validate()?;
        Ok(Some(task))
    }
}

/// Behavior component of the data-generating mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BehaviorSpec {
    Gaussian { mean: Vec<f64>, std: f64 },
    Linear { gain: Vec<Vec<f64>>, bias: Vec<f64>, std: f64 },
    /// Gridworld only.
    TowardGoal,
    /// Gridworld only.
    AwayFromGoal,
    /// Tabular tasks: uniform over actions.
    Uniform,
    Table { probs: Vec<Vec<f64>> },
}

impl BehaviorSpec {
    fn descriptor(&self, spec: &TaskSpec, task: &Task) -> Result<PolicyDescriptor> {
        let grid = || {
            spec.gridworld()
                .ok_or_else(|| Error::config("toward_goal/away_from_goal need a gridworld task"))
        };
        Ok(match self {
            BehaviorSpec::Gaussian { mean, std } => PolicyDescriptor::Gaussian {
                mean: mean.clone(),
                std: *std,
            },
            BehaviorSpec::Linear { gain, bias, std } => PolicyDescriptor::Linear {
                gain: gain.clone(),
                bias: bias.clone(),
                std: *std,
            },
            BehaviorSpec::TowardGoal => PolicyDescriptor::Table {
                policy: grid()?.toward_goal_policy(),
            },
            BehaviorSpec::AwayFromGoal => PolicyDescriptor::Table {
                policy: grid()?.away_from_goal_policy(),
            },
            BehaviorSpec::Uniform => match task {
                Task::Tabular(t) => PolicyDescriptor::Table {
                    policy: DiscretePolicy::uniform(t.mdp.n_states(), t.mdp.n_actions()),
                },
                _ => return Err(Error::config("uniform behavior needs a tabular task")),
            },
            BehaviorSpec::Table { probs } => PolicyDescriptor::Table {
                policy: DiscretePolicy::new(probs.clone())?,
            },
        })
    }
}

/// Where the offline dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    /// JSON Lines file; relative paths resolve against the config file's directory.
    File { path: PathBuf },
    Generate {
        episodes: usize,
        horizon: usize,
        epsilon: f64,
        #[serde(default)]
        seed: u64,
        good: BehaviorSpec,
        poor: BehaviorSpec,
    },
}

/// Training hyperparameters; unset values come from the profile and the defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_every: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy_lr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_lr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_lr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soft_update: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tighten_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossName {
    #[default]
    L2,
    L1,
    Huber,
    Flat,
    Skew,
}

impl std::str::FromStr for LossName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "l2" => LossName::L2,
            "l1" => LossName::L1,
            "huber" => LossName::Huber,
            "flat" => LossName::Flat,
            "skew" => LossName::Skew,
            other => return Err(Error::config(format!("unknown loss `{other}`"))),
        })
    }
}

/// Loss kind plus optional constants; Flat/Skew constants default from `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    #[serde(default)]
    pub kind: LossName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c3: Option<f64>,
}

impl LossConfig {
    pub fn resolve(&self, sigma: f64) -> Result<RobustLoss> {
        let pick = |d: RobustLoss| match d {
            RobustLoss::Flat { c1, c2, c3 } | RobustLoss::Skew { c1, c2, c3 } => {
                (self.c1.unwrap_or(c1), self.c2.unwrap_or(c2), self.c3.unwrap_or(c3))
            }
            _ => unreachable!(),
        };
        let loss = match self.kind {
            LossName::L2 => RobustLoss::L2,
            LossName::L1 => RobustLoss::L1,
            LossName::Huber => RobustLoss::Huber {
                kappa: self.kappa.unwrap_or(DEFAULT_KAPPA),
            },
            LossName::Flat => {
                let (c1, c2, c3) = pick(RobustLoss::flat_for_sigma(sigma));
                RobustLoss::Flat { c1, c2, c3 }
            }
            LossName::Skew => {
                let (c1, c2, c3) = pick(RobustLoss::skew_for_sigma(sigma));
                RobustLoss::Skew { c1, c2, c3 }
            }
        };
        loss.validate()?;
        Ok(loss)
    }
}

/// Priority scheme; `lambda` defaults to the weight `λ` and `p_max` to `w_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorityConfig {
    #[serde(default = "none_kind")]
    pub kind: PriorityKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantile_level: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub odpr_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<StatsMode>,
}

fn none_kind() -> PriorityKind {
    PriorityKind::None
}

impl Default for PriorityConfig {
    fn default() -> Self {
        Self {
            kind: PriorityKind::None,
            lambda: None,
            quantile_level: None,
            odpr_scale: None,
            floor: None,
            p_max: None,
            stats: None,
        }
    }
}

impl PriorityConfig {
    pub fn resolve(&self, lambda: f64, w_max: f64) -> Result<PriorityScheme> {
        let mut s = PriorityScheme::new(self.kind, self.lambda.unwrap_or(lambda), self.p_max.unwrap_or(w_max));
        if let Some(q) = self.quantile_level {
            s.quantile_level = q;
        }
        if let Some(c) = self.odpr_scale {
            s.odpr_scale = c;
        }
        if let Some(f) = self.floor {
            s.floor = f;
        }
        if let Some(m) = self.stats {
            s.stats = m;
        }
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ApproxConfig {
    Mlp {
        #[serde(default = "hidden64")]
        hidden: Vec<usize>,
    },
    /// Lookup tables; axes default from the task when omitted.
    Tabular {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        states: Option<Vec<Axis>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        actions: Option<Vec<Axis>>,
    },
}

fn hidden64() -> Vec<usize> {
    vec![64, 64]
}

impl Default for ApproxConfig {
    fn default() -> Self {
        ApproxConfig::Mlp { hidden: hidden64() }
    }
}

impl ApproxConfig {
    fn resolve(&self, spec: &TaskSpec) -> Result<ApproxSpec> {
        match self {
            ApproxConfig::Mlp { hidden } => Ok(ApproxSpec::Mlp { hidden: hidden.clone() }),
            ApproxConfig::Tabular { states, actions } => {
                let (ds, da) = default_axes(spec);
                let states = states.clone().or(ds).ok_or_else(|| Error::config("tabular approx needs state axes"))?;
                let actions = actions
                    .clone()
                    .or(da)
                    .ok_or_else(|| Error::config("tabular approx needs action axes"))?;
                Ok(ApproxSpec::Tabular {
                    states: Discretizer::new(states)?,
                    actions: Discretizer::new(actions)?,
                })
            }
        }
    }
}

fn default_axes(spec: &TaskSpec) -> (Option<Vec<Axis>>, Option<Vec<Axis>>) {
    match spec {
        TaskSpec::Bandit { target } => (
            Some(vec![Axis::integers(1)]),
            Some(vec![
                Axis {
                    low: -2.5,
                    high: 2.5,
                    bins: 50,
                };
                target.len()
            ]),
        ),
        TaskSpec::Gridworld { width, height, .. } => (
            Some(vec![Axis::integers(*width), Axis::integers(*height)]),
            Some(vec![Axis::integer_range(-1, 1); 2]),
        ),
        _ => (None, None),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_mode: Option<ActionMode>,
}

/// A complete experiment description, as read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    /// Reference score reported alongside results (for example a published baseline).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_score: Option<f64>,
    pub task: TaskSpec,
    pub data: DataConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub priority: PriorityConfig,
    #[serde(default)]
    pub approx: ApproxConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<ScoreEntry>,
}

/// Everything needed to run an experiment, with every default filled in.
#[derive(Debug, Clone)]
pub struct ResolvedExperiment {
    pub name: String,
    pub task: Option<Task>,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub eval_episodes: usize,
    pub eval_horizon: usize,
    pub eval_seed: u64,
    pub action_mode: ActionMode,
    pub score: Option<ScoreEntry>,
    pub reference_score: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Fills in defaults; `seed` replaces the seed list with a single seed.
    pub fn resolve(&self, profile: Profile, seed: Option<u64>) -> Result<ResolvedExperiment> {
        let t = &self.train;
        let sigma = t.sigma.unwrap_or_else(default_sigma);
        let lambda = t.lambda.unwrap_or(0.2);
        let w_max = t.w_max.unwrap_or(1e4);
        let optimizer = t.optimizer.unwrap_or_default();
        let value = ValueHyper {
            tau: t.tau.unwrap_or(0.7),
            gamma: t.gamma.unwrap_or(0.99),
            soft_update: t.soft_update.unwrap_or(0.005),
            v_lr: t.value_lr.unwrap_or(3e-4),
            q_lr: t.q_lr.unwrap_or(3e-4),
            optimizer,
        };
        let train = TrainConfig {
            iterations: t.iterations.unwrap_or(profile.iterations()),
            batch_size: t.batch_size.unwrap_or(512),
            loss: self.loss.resolve(sigma)?,
            tighten_rate: t.tighten_rate.unwrap_or(0.0),
            priority: self.priority.resolve(lambda, w_max)?,
            lambda,
            w_max,
            sigma,
            policy_lr: t.policy_lr.unwrap_or(3e-4),
            policy_optimizer: optimizer,
            value,
            approx: self.approx.resolve(&self.task)?,
            eval_every: t.eval_every.unwrap_or(profile.eval_every()),
        };
        train.validate()?;
        let task = self.task.build()?;
        let data_horizon = match &self.data {
            DataConfig::Generate { horizon, .. } => Some(*horizon),
            DataConfig::File { .. } => None,
        };
        let eval_horizon = self.eval.horizon.or(data_horizon).unwrap_or(1000);
        let score = match self.score {
            Some(s) => {
                s.validate()?;
                Some(s)
            }
            None => ScoreTable::d4rl().get(&self.task.name()),
        };
        let seeds = match seed {
            Some(s) => vec![s],
            None => self.seeds.clone().unwrap_or_else(|| profile.seeds()),
        };
        if seeds.is_empty() {
            return Err(Error::config("at least one seed is required"));
        }
        Ok(ResolvedExperiment {
            name: self.name.clone(),
            task,
            train,
            seeds,
            eval_episodes: self.eval.episodes.unwrap_or(10),
            eval_horizon,
            eval_seed: self.eval.seed.unwrap_or(12345),
            action_mode: self.eval.action_mode.unwrap_or_default(),
            score,
            reference_score: self.reference_score,
        })
    }

    /// Generates or loads the dataset. `base` anchors relative file paths.
    pub fn dataset(&self, base: Option<&Path>) -> Result<Dataset> {
        match &self.data {
            DataConfig::File { path } => {
                let full = match base {
                    Some(b) if path.is_relative() => b.join(path),
                    _ => path.clone(),
                };
                super::run::ingest_dataset(&full)
            }
            DataConfig::Generate {
                episodes,
                horizon,
                epsilon,
                seed,
                good,
                poor,
            } => {
                let task = self
                    .task
                    .build()?
                    .ok_or_else(|| Error::config("external tasks cannot generate data"))?;
                let behavior = MixtureBehavior::new(
                    good.descriptor(&self.task, &task)?,
                    poor.descriptor(&self.task, &task)?,
                    *epsilon,
                )?;
                generate_dataset(&task, &behavior, *episodes, *horizon, *seed)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BANDIT: &str = r#"
name = "bandit"
seeds = [0, 1, 2]

[task]
kind = "bandit"
target = [1.0]

[data]
source = "generate"
episodes = 200
horizon = 1
epsilon = 0.9
good = { kind = "gaussian", mean = [1.0], std = 0.2 }
poor = { kind = "gaussian", mean = [-1.0], std = 0.2 }

[train]
iterations = 10
lambda = 0.5

[loss]
kind = "flat"

[priority]
kind = "exp_normal"

[approx]
kind = "tabular"
"#;

    #[test]
    fn parse_resolve_round_trip() {
        let cfg = ExperimentConfig::from_toml_str(BANDIT).unwrap();
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(cfg, back);
        let r = cfg.resolve(Profile::Desk, None).unwrap();
        assert_eq!(r.train.iterations, 10);
        assert_eq!(r.train.eval_every, 500);
        assert_eq!(r.train.priority.lambda, 0.5);
        assert_eq!(r.train.priority.p_max, 1e4);
        assert_eq!(r.train.loss, RobustLoss::flat_for_sigma(default_sigma()));
        assert_eq!(r.eval_horizon, 1);
        let data = cfg.dataset(None).unwrap();
        assert_eq!(data.len(), 200);
        assert_eq!(cfg.resolve(Profile::Paper, Some(7)).unwrap().seeds, vec![7]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = BANDIT.replace("lambda = 0.5", "lambda = 0.5\nlamda = 0.5");
        assert!(matches!(ExperimentConfig::from_toml_str(&bad), Err(Error::Config(_))));
        let bad = BANDIT.replace("kind = \"exp_normal\"", "kind = \"exp_normal\"\nbogus = 1");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        let bad = BANDIT.replace("lambda = 0.5", "lambda = -0.5");
        assert!(ExperimentConfig::from_toml_str(&bad).unwrap().resolve(Profile::Desk, None).is_err());
        let bad = BANDIT.replace("epsilon = 0.9", "epsilon = 1.9");
        assert!(ExperimentConfig::from_toml_str(&bad).unwrap().dataset(None).is_err());
    }

    #[test]
    fn profiles() {
        let cfg = ExperimentConfig::from_toml_str(&BANDIT.replace("iterations = 10\n", "")).unwrap();
        assert_eq!(cfg.resolve(Profile::Paper, None).unwrap().train.iterations, 400_000);
        assert_eq!(cfg.resolve(Profile::Desk, None).unwrap().train.iterations, 20_000);
        assert!("laptop".parse::<Profile>().is_err());
    }
}

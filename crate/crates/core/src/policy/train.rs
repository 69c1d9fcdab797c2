use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::eval::{best_so_far_score, evaluate_policy, ActionMode};
use super::{policy_loss, AdvantageWeight, DistributionKind, PolicySnapshot};
use crate::approx::{Model, Optimizer, OptimizerKind};
use crate::error::{Error, Result};
use crate::harness::{normalized_score, ScoreEntry};
use crate::loss::RobustLoss;
use crate::mdp::{Dataset, Discretizer, Task, Transition};
use crate::par::Mode;
use crate::replay::{PriorityScheme, ReplayBuffer};
use crate::value::{ValueHyper, ValueSnapshot};

/// Function classes for `Q`, `V` and `μ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ApproxSpec {
    /// tanh MLPs with the given hidden widths.
    Mlp { hidden: Vec<usize> },
    /// Lookup tables over discretized states and actions.
    Tabular { states: Discretizer, actions: Discretizer },
}

impl Default for ApproxSpec {
    fn default() -> Self {
        ApproxSpec::Mlp { hidden: vec![64, 64] }
    }
}

/// Hyperparameters of one CAWR run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub iterations: u64,
    pub batch_size: usize,
    pub loss: RobustLoss,
    /// `c₁` multiplier growth over training for Flat/Skew; 0 disables tightening.
    pub tighten_rate: f64,
    pub priority: PriorityScheme,
    pub lambda: f64,
    pub w_max: f64,
    pub sigma: f64,
    pub policy_lr: f64,
    pub policy_optimizer: OptimizerKind,
    pub value: ValueHyper,
    pub approx: ApproxSpec,
    pub eval_every: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.priority.validate()?;
        self.value.validate()?;
        self.policy_optimizer.validate()?;
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        if !(self.lambda > 0.0 && self.w_max > 0.0 && self.sigma > 0.0) {
            return Err(Error::config("lambda, w_max and sigma must be positive"));
        }
        if !(self.policy_lr >= 0.0 && self.tighten_rate >= 0.0) {
            return Err(Error::config("policy lr and tighten rate must be nonnegative"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval cadence must be positive"));
        }
        Ok(())
    }
}

/// Builds the initial `(Q, V, μ)` for `dataset` from `seed`.
pub fn init_models(dataset: &Dataset, spec: &ApproxSpec, seed: u64) -> Result<(Model, Model, Model)> {
    let (sd, ad) = (dataset.state_dim(), dataset.action_dim());
    match spec {
        ApproxSpec::Mlp { hidden } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sizes = |i: usize, o: usize| {
                let mut v = vec![i];
                v.extend_from_slice(hidden);
                v.push(o);
                v
            };
            let q = Model::mlp(&sizes(sd + ad, 1), &mut rng)?;
            let v = Model::mlp(&sizes(sd, 1), &mut rng)?;
            let mu = Model::mlp(&sizes(sd, ad), &mut rng)?;
            Ok((q, v, mu))
        }
        ApproxSpec::Tabular { states, actions } => {
            if states.dim() != sd || actions.dim() != ad {
                return Err(Error::config("tabular discretizers do not match the dataset dimensions"));
            }
            Ok((
                Model::tabular(states.concat(actions), 1, 0.0)?,
                Model::tabular(states.clone(), 1, 0.0)?,
                Model::tabular(states.clone(), ad, 0.0)?,
            ))
        }
    }
}

/// Generator for the `D₁`/`D₂` draws of a run.
pub fn sampling_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: u64,
    pub value_loss: f64,
    pub q_loss: f64,
    pub policy_loss: f64,
    pub mean_weight: f64,
}

/// Step-by-step CAWR driver over a borrowed dataset.
#[derive(Debug, Clone)]
pub struct CawrTrainer<'d> {
    dataset: &'d Dataset,
    config: TrainConfig,
    values: ValueSnapshot,
    policy: PolicySnapshot,
    policy_opt: Optimizer,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    k: u64,
}

impl<'d> CawrTrainer<'d> {
    pub fn new(dataset: &'d Dataset, config: TrainConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (q, v, mu) = init_models(dataset, &config.approx, seed)?;
        let policy = PolicySnapshot::new(mu, config.sigma, DistributionKind::for_loss(&config.loss))?;
        let policy_opt = Optimizer::new(config.policy_optimizer, config.policy_lr, policy.mean.n_params());
        Ok(Self {
            values: ValueSnapshot::new(q, v, config.value)?,
            buffer: ReplayBuffer::new(dataset.len(), config.priority)?,
            rng: sampling_rng(seed),
            dataset,
            config,
            policy,
            policy_opt,
            k: 0,
        })
    }

    pub fn iteration(&self) -> u64 {
        self.k
    }

    pub fn policy(&self) -> &PolicySnapshot {
        &self.policy
    }

    pub fn values(&self) -> &ValueSnapshot {
        &self.values
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Loss in force at the current iteration (after convex-region tightening).
    pub fn current_loss(&self) -> RobustLoss {
        let progress = if self.config.iterations == 0 {
            0.0
        } else {
            self.k as f64 / self.config.iterations as f64
        };
        self.config.loss.tighten(progress, self.config.tighten_rate)
    }

    fn batch(&self, idx: &[usize]) -> Vec<&'d Transition> {
        idx.iter().map(|&i| &self.dataset.transitions()[i]).collect()
    }

    /// Runs one iteration `k`.
    pub fn step(&mut self) -> Result<IterationReport> {
        let k = self.k;
        let n = self.config.batch_size;
        self.values.begin_iteration(k)?;

        let d1 = self.buffer.sample_uniform(&mut self.rng, n);
        let d2 = self.buffer.sample_prioritized(&mut self.rng, n);
        let b1 = self.batch(&d1);
        let b2 = self.batch(&d2);

        let value_loss = self.values.update_value(&b1)?;
        let q_loss = self.values.update_q(&b1)?;
        self.values.soft_update();

        let idx: Vec<usize> = d1.iter().chain(&d2).copied().collect();
        let adv = b1
            .iter()
            .chain(&b2)
            .map(|t| self.values.advantage(&t.state, &t.action))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(bad) = adv.iter().position(|a| !a.is_finite()) {
            return Err(Error::NonFinite {
                what: format!("advantage of sample {}", idx[bad]),
                iteration: k,
            });
        }

        let stats = self.buffer.refresh_stats(&adv)?;
        let aw = AdvantageWeight::for_scheme(&self.config.priority, self.config.lambda, self.config.w_max, Some(&stats));
        let weights: Vec<f64> = adv.iter().map(|&a| aw.weight(a)).collect();
        let mean_weight = weights.iter().sum::<f64>() / weights.len() as f64;

        let loss = self.current_loss();
        let (policy_loss, grad) = policy_loss(&self.policy, &loss, &b2, &weights[n..])?;
        if !policy_loss.is_finite() {
            return Err(Error::NonFinite {
                what: "policy loss".into(),
                iteration: k,
            });
        }
        self.policy_opt.step(self.policy.mean.params_mut(), &grad, k)?;

        self.buffer.write_priorities(&idx, &adv)?;
        self.k += 1;
        Ok(IterationReport {
            iteration: k,
            value_loss,
            q_loss,
            policy_loss,
            mean_weight,
        })
    }
}

/// Environment rollouts used at each checkpoint.
#[derive(Debug, Clone)]
pub struct EvalSpec<'t> {
    pub task: &'t Task,
    pub episodes: usize,
    pub horizon: usize,
    pub seed: u64,
    pub action_mode: ActionMode,
    pub score: Option<ScoreEntry>,
    pub mode: Mode,
}

pub const METRICS_HEADER: &str =
    "iteration,mean_return,std_return,score,score_k,value_loss,q_loss,policy_loss,mean_weight,priority_entropy";

/// One metrics CSV row. Losses are those of the last completed iteration (NaN before the first).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: u64,
    pub mean_return: f64,
    pub std_return: f64,
    pub score: f64,
    pub score_k: f64,
    pub value_loss: f64,
    pub q_loss: f64,
    pub policy_loss: f64,
    pub mean_weight: f64,
    pub priority_entropy: f64,
}

impl MetricsRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.iteration,
            self.mean_return,
            self.std_return,
            self.score,
            self.score_k,
            self.value_loss,
            self.q_loss,
            self.policy_loss,
            self.mean_weight,
            self.priority_entropy
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: PolicySnapshot,
    pub values: ValueSnapshot,
    pub rows: Vec<MetricsRow>,
}

/// Runs `config.iterations` CAWR iterations, emitting a metrics row at
/// iteration 0, every `eval_every` iterations and at the end.
///
/// Rows go to `sink` as they are produced, so a run that aborts keeps every
/// row emitted before the failure. Without `eval`, returns and scores are NaN.
pub fn train_cawr(
    dataset: &Dataset,
    config: &TrainConfig,
    seed: u64,
    eval: Option<&EvalSpec<'_>>,
    sink: &mut dyn FnMut(&MetricsRow) -> Result<()>,
) -> Result<TrainOutcome> {
    let mut trainer = CawrTrainer::new(dataset, config.clone(), seed)?;
    let mut rows: Vec<MetricsRow> = Vec::new();
    let mut last: Option<IterationReport> = None;
    let mut scores: Vec<f64> = Vec::new();

    let mut emit = |trainer: &CawrTrainer<'_>, last: Option<IterationReport>, rows: &mut Vec<MetricsRow>| -> Result<()> {
        let (mean_return, std_return, score) = match eval {
            Some(spec) => {
                let res = evaluate_policy(
                    trainer.policy(),
                    spec.task,
                    spec.episodes,
                    spec.horizon,
                    spec.seed,
                    spec.action_mode,
                    spec.mode,
                )?;
                let score = match &spec.score {
                    Some(entry) => normalized_score(res.mean_return, entry)?,
                    None => res.mean_return,
                };
                (res.mean_return, res.std_return, score)
            }
            None => (f64::NAN, f64::NAN, f64::NAN),
        };
        scores.push(score);
        let score_k = *best_so_far_score(&scores).last().unwrap();
        let r = last.unwrap_or(IterationReport {
            iteration: 0,
            value_loss: f64::NAN,
            q_loss: f64::NAN,
            policy_loss: f64::NAN,
            mean_weight: f64::NAN,
        });
        let row = MetricsRow {
            iteration: trainer.iteration(),
            mean_return,
            std_return,
            score,
            score_k,
            value_loss: r.value_loss,
            q_loss: r.q_loss,
            policy_loss: r.policy_loss,
            mean_weight: r.mean_weight,
            priority_entropy: trainer.buffer().entropy(),
        };
        sink(&row)?;
        rows.push(row);
        Ok(())
    };

    emit(&trainer, last, &mut rows)?;
    while trainer.iteration() < config.iterations {
        last = Some(trainer.step()?);
        let k = trainer.iteration();
        if k % config.eval_every == 0 || k == config.iterations {
            emit(&trainer, last, &mut rows)?;
        }
    }
    Ok(TrainOutcome {
        policy: trainer.policy.clone(),
        values: trainer.values.clone(),
        rows,
    })
}

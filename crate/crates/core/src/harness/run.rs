use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, LossName, Profile};
use crate::error::Result;
use crate::mdp::Dataset;
use crate::par::{self, Mode};
use crate::policy::{self, train_cawr, EvalSpec, MetricsRow, METRICS_HEADER};
use crate::replay::PriorityKind;

/// Loads and validates a JSON Lines dataset.
pub fn ingest_dataset(path: &Path) -> Result<Dataset> {
    Dataset::load(path)
}

/// Cross-seed statistics at one checkpoint; standard deviations are population values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatePoint {
    pub iteration: u64,
    pub n_seeds: usize,
    pub mean_return: f64,
    pub std_return: f64,
    pub score: f64,
    pub score_std: f64,
    pub score_k: f64,
    pub score_k_std: f64,
}

/// Aggregates per-seed rows at the iterations every seed reached.
pub fn aggregate_rows(per_seed: &[Vec<MetricsRow>]) -> Vec<AggregatePoint> {
    let Some(first) = per_seed.first() else {
        return Vec::new();
    };
    first
        .iter()
        .filter_map(|row| {
            let at: Vec<&MetricsRow> = per_seed
                .iter()
                .filter_map(|rows| rows.iter().find(|r| r.iteration == row.iteration))
                .collect();
            if at.len() != per_seed.len() {
                return None;
            }
            let stat = |f: fn(&MetricsRow) -> f64| {
                let xs: Vec<f64> = at.iter().map(|r| f(r)).collect();
                policy::mean_std_pub(&xs)
            };
            let (mean_return, std_return) = stat(|r| r.mean_return);
            let (score, score_std) = stat(|r| r.score);
            let (score_k, score_k_std) = stat(|r| r.score_k);
            Some(AggregatePoint {
                iteration: row.iteration,
                n_seeds: at.len(),
                mean_return,
                std_return,
                score,
                score_std,
                score_k,
                score_k_std,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
}

/// Contents of `aggregate.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub status: String,
    pub seeds: Vec<u64>,
    pub failed: Vec<SeedFailure>,
    /// Final evaluated mean return of each successful seed, in seed order.
    pub final_returns: Vec<f64>,
    pub reference_score: Option<f64>,
    pub points: Vec<AggregatePoint>,
}

impl RunSummary {
    pub fn ok(&self) -> bool {
        self.failed.is_empty()
    }

    pub fn final_point(&self) -> Option<&AggregatePoint> {
        self.points.last()
    }
}

/// Trains every seed of `config` and writes `out/seed_<s>/metrics.csv`,
/// checkpoints and `out/aggregate.json`.
///
/// A failing seed keeps its partial metrics and an `error.txt`; the summary is
/// then marked failed and aggregates only the seeds that finished.
pub fn run_experiment(
    config: &ExperimentConfig,
    profile: Profile,
    seed: Option<u64>,
    out: &Path,
    base: Option<&Path>,
    mode: Mode,
) -> Result<RunSummary> {
    let resolved = config.resolve(profile, seed)?;
    let dataset = config.dataset(base)?;
    fs::create_dir_all(out)?;
    fs::write(out.join("config.toml"), config.to_toml_string()?)?;

    let results = par::map_with(mode, &resolved.seeds, |&s| -> Result<std::result::Result<Vec<MetricsRow>, String>> {
        let dir = out.join(format!("seed_{s}"));
        fs::create_dir_all(&dir)?;
        let mut csv = BufWriter::new(File::create(dir.join("metrics.csv"))?);
        writeln!(csv, "{METRICS_HEADER}")?;
        let eval = resolved.task.as_ref().map(|task| EvalSpec {
            task,
            episodes: resolved.eval_episodes,
            horizon: resolved.eval_horizon,
            seed: resolved.eval_seed,
            action_mode: resolved.action_mode,
            score: resolved.score,
            mode: Mode::Sequential,
        });
        let mut sink = |row: &MetricsRow| -> Result<()> {
            writeln!(csv, "{}", row.csv_line())?;
            Ok(())
        };
        let outcome = train_cawr(&dataset, &resolved.train, s, eval.as_ref(), &mut sink);
        csv.flush()?;
        match outcome {
            Ok(o) => {
                o.policy.mean.save(&dir.join("policy.json"))?;
                o.values.q.save(&dir.join("q.json"))?;
                o.values.v.save(&dir.join("v.json"))?;
                Ok(Ok(o.rows))
            }
            Err(e) => {
                log::error!("seed {s} aborted: {e}");
                fs::write(dir.join("error.txt"), e.to_string())?;
                Ok(Err(e.to_string()))
            }
        }
    });

    let mut per_seed = Vec::new();
    let mut failed = Vec::new();
    for (&s, r) in resolved.seeds.iter().zip(results) {
        match r? {
            Ok(rows) => per_seed.push(rows),
            Err(error) => failed.push(SeedFailure { seed: s, error }),
        }
    }
    let summary = RunSummary {
        name: resolved.name.clone(),
        status: if failed.is_empty() { "ok".into() } else { "failed".into() },
        seeds: resolved.seeds.clone(),
        failed,
        final_returns: per_seed
            .iter()
            .map(|rows| rows.last().map_or(f64::NAN, |r| r.mean_return))
            .collect(),
        reference_score: resolved.reference_score,
        points: aggregate_rows(&per_seed),
    };
    fs::write(out.join("aggregate.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

/// One cell of a loss × priority grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub loss: LossName,
    pub priority: PriorityKind,
    pub dir: PathBuf,
    pub status: String,
    pub final_returns: Vec<f64>,
    pub final_return_mean: f64,
    pub final_return_std: f64,
    pub final_score_k: f64,
}

/// Runs `config` for every `(loss, priority)` pair into `out/<loss>_<priority>/`
/// and writes `out/summary.csv` and `out/summary.json`.
#[allow(clippy::too_many_arguments)]
pub fn ablate(
    config: &ExperimentConfig,
    losses: &[LossName],
    priorities: &[PriorityKind],
    profile: Profile,
    seed: Option<u64>,
    out: &Path,
    base: Option<&Path>,
    mode: Mode,
) -> Result<Vec<AblationCell>> {
    let grid: Vec<(LossName, PriorityKind)> = losses
        .iter()
        .flat_map(|&l| priorities.iter().map(move |&p| (l, p)))
        .collect();
    let cells = par::map_with(mode, &grid, |&(loss, priority)| -> Result<AblationCell> {
        let mut cfg = config.clone();
        cfg.loss.kind = loss;
        cfg.priority.kind = priority;
        cfg.name = format!("{}-{}", config.name, cell_name(loss, priority));
        let dir = out.join(cell_name(loss, priority));
        let summary = run_experiment(&cfg, profile, seed, &dir, base, mode)?;
        let (mean, std) = policy::mean_std_pub(&summary.final_returns);
        Ok(AblationCell {
            loss,
            priority,
            dir,
            status: summary.status.clone(),
            final_return_mean: mean,
            final_return_std: std,
            final_score_k: summary.final_point().map_or(f64::NAN, |p| p.score_k),
            final_returns: summary.final_returns,
        })
    });
    let cells = cells.into_iter().collect::<Result<Vec<_>>>()?;
    let mut csv = String::from("loss,priority,status,final_return_mean,final_return_std,final_score_k\n");
    for c in &cells {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            loss_label(c.loss),
            priority_label(c.priority),
            c.status,
            c.final_return_mean,
            c.final_return_std,
            c.final_score_k
        ));
    }
    fs::write(out.join("summary.csv"), csv)?;
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&cells)?)?;
    Ok(cells)
}

fn loss_label(l: LossName) -> &'static str {
    match l {
        LossName::L2 => "l2",
        LossName::L1 => "l1",
        LossName::Huber => "huber",
        LossName::Flat => "flat",
        LossName::Skew => "skew",
    }
}

fn priority_label(p: PriorityKind) -> &'static str {
    match p {
        PriorityKind::None => "none",
        PriorityKind::ExpStandard => "exp_standard",
        PriorityKind::ExpNormal => "exp_normal",
        PriorityKind::ExpQuantile => "exp_quantile",
        PriorityKind::Odpr => "odpr",
        PriorityKind::Aw => "aw",
    }
}

fn cell_name(l: LossName, p: PriorityKind) -> String {
    format!("{}_{}", loss_label(l), priority_label(p))
}

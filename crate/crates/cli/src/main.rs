use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cawr::approx::Model;
use cawr::harness::{ablate, normalized_score, run_experiment, ExperimentConfig, LossName, Profile};
use cawr::oracle::{run_suite, SuiteConfig};
use cawr::par::Mode;
use cawr::policy::{evaluate_policy, DistributionKind, PolicySnapshot};
use cawr::replay::PriorityKind;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cawr", version, about = "Corruption-averse advantage-weighted regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed list (train, ablate) or the data seed (generate-dataset).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "desk", value_parser = parse_profile)]
    profile: Profile,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured corrupted dataset as JSON Lines.
    GenerateDataset(Common),
    /// Train every seed and write metrics, checkpoints and aggregate.json.
    Train(Common),
    /// Evaluate a saved policy checkpoint on the configured task.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Run the oracle suite and write a JSON report; exits non-zero on failure.
    VerifyTheorems {
        /// Optional TOML file with instance counts.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a loss × priority grid.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "l2,l1")]
        losses: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "none,exp_normal")]
        priorities: Vec<String>,
    },
}

fn parse_profile(s: &str) -> Result<Profile, String> {
    s.parse().map_err(|e: cawr::Error| e.to_string())
}

fn parse_priority(s: &str) -> Result<PriorityKind> {
    Ok(match s {
        "none" => PriorityKind::None,
        "exp_standard" => PriorityKind::ExpStandard,
        "exp_normal" => PriorityKind::ExpNormal,
        "exp_quantile" => PriorityKind::ExpQuantile,
        "odpr" => PriorityKind::Odpr,
        "aw" => PriorityKind::Aw,
        other => bail!("unknown priority scheme `{other}`"),
    })
}

fn load(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let mode = if cli.sequential { Mode::Sequential } else { Mode::default_mode() };
    match cli.command {
        Command::GenerateDataset(c) => {
            let mut cfg = load(&c.config)?;
            if let (Some(s), cawr::harness::DataConfig::Generate { seed, .. }) = (c.seed, &mut cfg.data) {
                *seed = s;
            }
            let data = cfg.dataset(c.config.parent())?;
            if let Some(dir) = c.out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            data.save(&c.out)?;
            log::info!("wrote {} transitions to {}", data.len(), c.out.display());
        }
        Command::Train(c) => {
            let cfg = load(&c.config)?;
            let summary = run_experiment(&cfg, c.profile, c.seed, &c.out, c.config.parent(), mode)?;
            if let Some(p) = summary.final_point() {
                log::info!("iteration {}: return {:.4} ± {:.4}", p.iteration, p.mean_return, p.std_return);
            }
            if !summary.ok() {
                bail!("{} seed(s) failed, see {}", summary.failed.len(), c.out.display());
            }
        }
        Command::Evaluate { common: c, checkpoint } => {
            let cfg = load(&c.config)?;
            let run = cfg.resolve(c.profile, c.seed)?;
            let Some(task) = run.task.as_ref() else {
                bail!("task `{}` has no simulator to evaluate on", cfg.task.name());
            };
            let mean = Model::load(&checkpoint)?;
            let policy = PolicySnapshot::new(mean, run.train.sigma, DistributionKind::for_loss(&run.train.loss))?;
            let seed = c.seed.unwrap_or(run.eval_seed);
            let result = evaluate_policy(&policy, task, run.eval_episodes, run.eval_horizon, seed, run.action_mode, mode)?;
            let score = run.score.map(|s| normalized_score(result.mean_return, &s)).transpose()?;
            log::info!("return {:.4} ± {:.4} over {} episodes", result.mean_return, result.std_return, run.eval_episodes);
            write_json(
                &c.out,
                &serde_json::json!({ "checkpoint": checkpoint, "seed": seed, "score": score, "result": result }),
            )?;
        }
        Command::VerifyTheorems {
            config,
            seed,
            out,
        } => {
            let mut suite = match &config {
                Some(p) => SuiteConfig::from_toml_str(&fs::read_to_string(p)?)?,
                None => SuiteConfig::default(),
            };
            if let Some(s) = seed {
                suite.seed = s;
            }
            let report = run_suite(&suite, mode)?;
            for c in &report.checks {
                log::info!(
                    "{:<16} {} ({} instances, worst margin {:.3e}, {:.2}s)",
                    c.name,
                    if c.passed { "pass" } else { "FAIL" },
                    c.instances,
                    c.worst_margin,
                    c.seconds
                );
            }
            write_json(&out, &report)?;
            if !report.passed {
                bail!("theorem checks failed, see {}", out.display());
            }
        }
        Command::Ablate {
            common: c,
            losses,
            priorities,
        } => {
            let cfg = load(&c.config)?;
            let losses = losses.iter().map(|l| l.parse::<LossName>()).collect::<Result<Vec<_>, _>>()?;
            let priorities = priorities.iter().map(|p| parse_priority(p)).collect::<Result<Vec<_>>>()?;
            let cells = ablate(&cfg, &losses, &priorities, c.profile, c.seed, &c.out, c.config.parent(), mode)?;
            for cell in &cells {
                log::info!(
                    "{:?} + {:?}: {:.4} ± {:.4} ({})",
                    cell.loss,
                    cell.priority,
                    cell.final_return_mean,
                    cell.final_return_std,
                    cell.status
                );
            }
        }
    }
    Ok(())
}

use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    check_bias_bound, check_lemma3, check_lemma5_theorem3, constrained_row, simplex_grid_optimum, theorem1_row,
    total_variation, Applicability, Lemma3Probe, Weighting,
};
use crate::error::{Error, Result};
use crate::loss::RobustLoss;
use crate::mdp::{
    empirical_mdp, generate_dataset, new_rng, Axis, Discretizer, DiscretePolicy, EmpiricalMdp, GridMoves, Gridworld,
    MixtureBehavior, PolicyDescriptor, TabularTask, Task,
};
use crate::par::{self, Mode};
use crate::replay::{PriorityKind, PriorityScheme};

/// Instance counts for [`run_suite`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub seed: u64,
    pub bandits: usize,
    pub theorem1: usize,
    pub mixtures: usize,
    pub lemma3_probes: usize,
    pub gridworlds: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            bandits: 100,
            theorem1: 1000,
            mixtures: 1000,
            lemma3_probes: 10_000,
            gridworlds: 20,
        }
    }
}

impl SuiteConfig {
    /// Parses a TOML table; missing keys keep their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub instances: usize,
    pub failures: usize,
    /// Smallest `tolerance − error` (or bound margin) over instances.
    pub worst_margin: f64,
    pub seconds: f64,
    pub details: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub config: SuiteConfig,
    pub passed: bool,
    pub checks: Vec<CheckOutcome>,
}

impl TheoremReport {
    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Independent stream per instance so results do not depend on scheduling.
fn instance_rng(seed: u64, family: u64, i: usize) -> ChaCha8Rng {
    let mut rng = new_rng(seed.wrapping_mul(31).wrapping_add(family));
    rng.set_stream(i as u64 + 1);
    rng
}

fn random_simplex(rng: &mut ChaCha8Rng, k: usize, floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(floor..1.0)).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / z).collect()
}

fn closed_form_check(cfg: &SuiteConfig, mode: Mode) -> Result<CheckOutcome> {
    let start = Instant::now();
    let tvs = par::map_range_with(mode, cfg.bandits, |i| {
        let mut rng = instance_rng(cfg.seed, 1, i);
        let k = rng.random_range(2..=3);
        let beta = random_simplex(&mut rng, k, 0.05);
        let adv: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lambda = rng.random_range(0.2..2.0);
        let grid = simplex_grid_optimum(&beta, &adv, lambda)?;
        Ok(total_variation(&grid, &constrained_row(&beta, &adv, lambda)))
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    let tol = 1e-3;
    let worst = tvs.iter().copied().fold(0.0, f64::max);
    let seconds = start.elapsed().as_secs_f64();
    let failures = tvs.iter().filter(|&&t| t > tol).count();
    Ok(CheckOutcome {
        name: "closed_form".into(),
        passed: failures == 0 && seconds < 10.0,
        instances: tvs.len(),
        failures,
        worst_margin: tol - worst,
        seconds,
        details: json!({ "max_tv": worst, "tolerance": tol, "time_limit_s": 10.0 }),
    })
}

fn theorem1_check(cfg: &SuiteConfig, mode: Mode) -> CheckOutcome {
    let start = Instant::now();
    let lambdas = [0.2, 1.0, 5.0];
    let margins = par::map_range_with(mode, cfg.theorem1, |i| {
        let mut rng = instance_rng(cfg.seed, 2, i);
        let k = rng.random_range(2..=8);
        let beta = random_simplex(&mut rng, k, 1e-3);
        let adv: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
        theorem1_row(&beta, &adv, lambdas[i % 3]).margin
    });
    let failures = margins.iter().filter(|&&m| m < -1e-12).count();
    let eps: Vec<f64> = (1..=6).map(|k| 10f64.powi(-k)).collect();
    let growth: Vec<f64> = eps
        .iter()
        .map(|&e| theorem1_row(&[e, 1.0 - e], &[1.0, -1.0], 1.0).lhs)
        .collect();
    let monotone = growth.windows(2).all(|w| w[1] > w[0]);
    CheckOutcome {
        name: "theorem1".into(),
        passed: failures == 0 && monotone,
        instances: margins.len(),
        failures,
        worst_margin: margins.iter().copied().fold(f64::INFINITY, f64::min),
        seconds: start.elapsed().as_secs_f64(),
        details: json!({ "degeneracy_eps": eps, "degeneracy_kl": growth, "monotone": monotone }),
    }
}

/// Random corrupted 1-D mixture with `ε < 0.45`, a good component narrow
/// relative to its distance from the poor one, and weights peaked at the good mean.
pub(crate) fn random_mixture(rng: &mut ChaCha8Rng) -> Result<(MixtureBehavior, Weighting, bool)> {
    let m_plus = rng.random_range(-1.0..1.0);
    let d: f64 = rng.random_range(0.5..3.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let atoms = rng.random_bool(0.3);
    let (s_plus, s_minus) = if atoms {
        (0.0, 0.0)
    } else {
        (rng.random_range(0.02..0.25) * d.abs(), rng.random_range(0.02..0.5))
    };
    let eps = rng.random_range(0.0..0.45);
    let weight = if rng.random_bool(0.5) {
        Weighting::Constant { w: 1.0 }
    } else {
        Weighting::BanditAdvantage {
            target: m_plus,
            lambda: rng.random_range(0.5..5.0),
            w_max: 100.0,
        }
    };
    let mixture = MixtureBehavior::new(
        PolicyDescriptor::Gaussian { mean: vec![m_plus], std: s_plus },
        PolicyDescriptor::Gaussian { mean: vec![m_plus + d], std: s_minus },
        eps,
    )?;
    Ok((mixture, weight, atoms))
}

#[derive(Default)]
struct BiasTally {
    bound_margins: Vec<f64>,
    bound_failures: usize,
    compared: usize,
    l1_worse: usize,
    point_mass: usize,
    point_mass_biased: usize,
    flat_compared: usize,
    flat_worse: usize,
}

fn bias_check(cfg: &SuiteConfig, mode: Mode) -> Result<CheckOutcome> {
    let start = Instant::now();
    let delta = MixtureBehavior::new(PolicyDescriptor::constant(vec![1.0]), PolicyDescriptor::constant(vec![-1.0]), 0.25)?;
    let tight = check_bias_bound(&delta, &Weighting::Constant { w: 1.0 }, &RobustLoss::L2)?;
    let exact = tight.bias == 0.5 && tight.corollary_bound == Some(0.5);
    let flat = RobustLoss::flat_for_sigma(1.0);
    let results = par::map_range_with(mode, cfg.mixtures, |i| {
        let mut rng = instance_rng(cfg.seed, 3, i);
        let (m, w, atoms) = random_mixture(&mut rng)?;
        let l2 = check_bias_bound(&m, &w, &RobustLoss::L2)?;
        let l1 = check_bias_bound(&m, &w, &RobustLoss::L1)?;
        let fl = check_bias_bound(&m, &w, &flat)?;
        Ok((atoms, l2, l1, fl))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut t = BiasTally::default();
    for (atoms, l2, l1, fl) in &results {
        let bound = l2.corollary_bound.unwrap_or(f64::NAN);
        t.bound_margins.push(bound - l2.bias);
        if l2.holds != Some(true) {
            t.bound_failures += 1;
        }
        if l2.unimodal && l1.unimodal {
            t.compared += 1;
            if l1.bias > l2.bias + 1e-7 {
                t.l1_worse += 1;
            }
        }
        if l2.unimodal && fl.unimodal {
            t.flat_compared += 1;
            if fl.bias > l2.bias + 1e-7 {
                t.flat_worse += 1;
            }
        }
        if *atoms {
            t.point_mass += 1;
            if l1.bias != 0.0 {
                t.point_mass_biased += 1;
            }
        }
    }
    let flat_applicable = results.iter().filter(|r| r.3.applicability == Applicability::Applicable).count();
    let failures = t.bound_failures + t.l1_worse + t.point_mass_biased + usize::from(!exact);
    Ok(CheckOutcome {
        name: "bias_bound".into(),
        passed: failures == 0,
        instances: results.len(),
        failures,
        worst_margin: t.bound_margins.iter().copied().fold(f64::INFINITY, f64::min),
        seconds: start.elapsed().as_secs_f64(),
        details: json!({
            "delta_instance": { "bias": tight.bias, "bound": tight.corollary_bound, "exact_equality": exact },
            "l2_bound_failures": t.bound_failures,
            "l1_vs_l2_compared": t.compared,
            "l1_worse_than_l2": t.l1_worse,
            "point_mass_instances": t.point_mass,
            "point_mass_l1_biased": t.point_mass_biased,
            "flat_vs_l2_compared": t.flat_compared,
            "flat_worse_than_l2": t.flat_worse,
            "flat_general_bound_applicable": flat_applicable,
        }),
    })
}

fn lemma3_check(cfg: &SuiteConfig) -> Result<CheckOutcome> {
    let start = Instant::now();
    let mut rng = instance_rng(cfg.seed, 4, 0);
    let probes: Vec<Lemma3Probe> = (0..cfg.lemma3_probes)
        .map(|_| {
            let d = rng.random_range(1..=4);
            Lemma3Probe {
                action: (0..d).map(|_| rng.random_range(-3.0..3.0)).collect(),
                mu: (0..d).map(|_| rng.random_range(-3.0..3.0)).collect(),
                sigma: rng.random_range(0.05..2.0),
                weight: rng.random_range(0.0..10.0),
            }
        })
        .collect();
    let r = check_lemma3(&probes)?;
    Ok(CheckOutcome {
        name: "lemma3".into(),
        passed: r.holds,
        instances: r.probes,
        failures: usize::from(!r.holds),
        worst_margin: 1e-10 - r.max_gradient_gap.max(r.max_constant_drift),
        seconds: start.elapsed().as_secs_f64(),
        details: serde_json::to_value(r)?,
    })
}

/// A five-cell corridor with a random goal, slip and corrupted behavior mixture,
/// reduced to its empirical MDP.
pub(crate) fn random_gridworld(rng: &mut ChaCha8Rng, seed: u64) -> Result<EmpiricalMdp> {
    let mut grid = Gridworld::new(5, 1, (rng.random_range(0..5), 0), GridMoves::Four);
    grid.slip = rng.random_range(0.0..0.3);
    grid.gamma = 0.9;
    let task = Task::Tabular(TabularTask::gridworld(&grid)?);
    let noise = rng.random_range(0.1..0.5);
    let blend = |p: &DiscretePolicy| -> Result<DiscretePolicy> {
        let k = p.n_actions() as f64;
        DiscretePolicy::new(
            p.rows()
                .into_iter()
                .map(|r| r.into_iter().map(|x| (1.0 - noise) * x + noise / k).collect())
                .collect(),
        )
    };
    let behavior = MixtureBehavior::new(
        PolicyDescriptor::Table { policy: blend(&grid.toward_goal_policy())? },
        PolicyDescriptor::Table { policy: blend(&grid.away_from_goal_policy())? },
        rng.random_range(0.3..0.9),
    )?;
    let data = generate_dataset(&task, &behavior, 60, 12, seed)?;
    let states = Discretizer::new(vec![Axis::integers(5), Axis::integers(1)])?;
    let actions = Discretizer::new(vec![Axis::integer_range(-1, 1), Axis::integer_range(-1, 1)])?;
    empirical_mdp(&data, &states, &actions, grid.gamma)
}

pub(crate) fn lemma5_schemes() -> Vec<PriorityScheme> {
    [
        PriorityKind::ExpStandard,
        PriorityKind::ExpNormal,
        PriorityKind::ExpQuantile,
        PriorityKind::Odpr,
        PriorityKind::Aw,
    ]
    .into_iter()
    .map(|k| PriorityScheme::new(k, 1.0, 1e4))
    .collect()
}

fn lemma5_check(cfg: &SuiteConfig, mode: Mode) -> Result<CheckOutcome> {
    let start = Instant::now();
    let lambdas = [0.1, 0.3, 1.0, 3.0];
    let schemes = lemma5_schemes();
    let reports = par::map_range_with(mode, cfg.gridworlds, |i| {
        let mut rng = instance_rng(cfg.seed, 5, i);
        let emp = random_gridworld(&mut rng, cfg.seed.wrapping_add(i as u64))?;
        check_lemma5_theorem3(&emp, &schemes, &lambdas)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let seconds = start.elapsed().as_secs_f64();
    let failures = reports.iter().filter(|r| !r.lemma5_holds || !r.theorem3_holds).count();
    let max_tv = reports.iter().map(|r| r.max_tv).fold(0.0, f64::max);
    let improved = reports.iter().filter(|r| r.best_scheme_margin > 1e-9).count();
    Ok(CheckOutcome {
        name: "lemma5_theorem3".into(),
        passed: failures == 0 && seconds < 60.0,
        instances: reports.len(),
        failures,
        worst_margin: reports.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min),
        seconds,
        details: json!({
            "max_tv": max_tv,
            "tv_tolerance": 1e-8,
            "margin_tolerance": -1e-9,
            "best_scheme_margins": reports.iter().map(|r| r.best_scheme_margin).collect::<Vec<_>>(),
            "instances_strictly_improved": improved,
            "excluded_cells": reports.iter().map(|r| r.excluded.len()).collect::<Vec<_>>(),
        }),
    })
}

/// Runs every oracle check on freshly drawn random instances.
pub fn run_suite(cfg: &SuiteConfig, mode: Mode) -> Result<TheoremReport> {
    let checks = vec![
        closed_form_check(cfg, mode)?,
        theorem1_check(cfg, mode),
        bias_check(cfg, mode)?,
        lemma3_check(cfg)?,
        lemma5_check(cfg, mode)?,
    ];
    Ok(TheoremReport {
        config: *cfg,
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}

//! Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::fs;
use std::path::Path;
use std::time::Instant;

use cawr::approx::OptimizerKind;
use cawr::harness::{ablate, normalized_score, AblationCell, ExperimentConfig, LossName, Profile, RunSummary, ScoreTable};
use cawr::mdp::new_rng;
use cawr::oracle::{run_suite, SuiteConfig, TheoremReport};
use cawr::par::Mode;
use cawr::policy::ApproxSpec;
use cawr::replay::PriorityKind;
use rand::Rng;

const BANDIT: &str = include_str!("../../../configs/bandit.toml");
const GRIDWORLD: &str = include_str!("../../../configs/gridworld.toml");

struct Line {
    id: u32,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn num(v: &serde_json::Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn oracle_lines(report: &TheoremReport) -> Vec<Line> {
    let get = |n: &str| report.check(n).expect("missing oracle check");
    let c1 = get("closed_form");
    let c2 = get("theorem1");
    let c3 = get("bias_bound");
    let c4 = get("lemma3");
    let c5 = get("lemma5_theorem3");
    vec![
        Line {
            id: 1,
            name: "closed-form optimal policy vs simplex grid",
            passed: c1.passed,
            detail: format!(
                "{} bandits, max TV {:.2e} (≤ 1e-3), {:.2} s (< 10 s)",
                c1.instances, num(&c1.details["max_tv"]), c1.seconds
            ),
        },
        Line {
            id: 2,
            name: "KL lower bound",
            passed: c2.passed,
            detail: format!(
                "{} instances, {} failures, worst margin {:.3e}; degeneracy KL monotone = {}",
                c2.instances, c2.failures, c2.worst_margin, c2.details["monotone"]
            ),
        },
        Line {
            id: 3,
            name: "bias bound and L1 vs L2",
            passed: c3.passed,
            detail: format!(
                "{} mixtures, L2 bound failures {}, L1 worse {} of {}, point-mass L1 biased {} of {}, delta instance {} vs {} exact = {}",
                c3.instances,
                c3.details["l2_bound_failures"],
                c3.details["l1_worse_than_l2"],
                c3.details["l1_vs_l2_compared"],
                c3.details["point_mass_l1_biased"],
                c3.details["point_mass_instances"],
                c3.details["delta_instance"]["bias"],
                c3.details["delta_instance"]["bound"],
                c3.details["delta_instance"]["exact_equality"],
            ),
        },
        Line {
            id: 4,
            name: "likelihood / robust-regression gradient equivalence",
            passed: c4.passed,
            detail: format!(
                "{} probes, max gradient gap {:.1e} (≤ 1e-10), max constant drift {:.1e}",
                c4.instances,
                num(&c4.details["max_gradient_gap"]),
                num(&c4.details["max_constant_drift"])
            ),
        },
        Line {
            id: 5,
            name: "resampled KL problem and resampling improvement",
            passed: c5.passed,
            detail: format!(
                "{} gridworlds, max TV {:.2e} (≤ 1e-8), worst margin {:.3e} (≥ -1e-9), strictly improved {}, {:.2} s (< 60 s)",
                c5.instances, num(&c5.details["max_tv"]), c5.worst_margin, c5.details["instances_strictly_improved"], c5.seconds
            ),
        },
    ]
}

fn gradient_line() -> Line {
    let mut parts = Vec::new();
    let mut passed = true;
    for (i, loss) in common::losses().iter().enumerate() {
        let s = common::fd_scalar_loss(loss, 100, i as u64);
        let p = common::fd_policy_objective(loss, 100, 10 + i as u64);
        passed &= s.ok() && p.ok();
        parts.push(format!("{} {:.1e}/{:.1e}", loss.name(), s.worst, p.worst));
    }
    let e = common::fd_expectile_scalar(100, 3);
    let (v, q) = common::fd_value_losses(100, 4);
    passed &= e.ok() && v.ok() && q.ok();
    parts.push(format!("expectile {:.1e}, V {:.1e}, Q {:.1e}", e.worst, v.worst, q.worst));
    Line {
        id: 6,
        name: "finite-difference gradients",
        passed,
        detail: format!("worst relative error (scalar/policy) {}", parts.join(", ")),
    }
}

fn sampler_line() -> Line {
    let chi: Vec<(f64, f64)> = (0..3).map(|s| common::prioritized_chi_square(100_000, s)).collect();
    let chi_ok = chi.iter().all(|(s, c)| s <= c);
    let stream_ok = common::uniform_stream_unaffected(500);
    let kinds = [
        PriorityKind::ExpStandard,
        PriorityKind::ExpNormal,
        PriorityKind::ExpQuantile,
        PriorityKind::Odpr,
        PriorityKind::Aw,
    ];
    let mut rng = new_rng(77);
    let overwrite_ok = (0..200).all(|i| {
        let n = rng.random_range(1..40);
        let adv: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        common::overwrite_idempotent(&adv, rng.random_range(-3.0..3.0), kinds[i % kinds.len()])
    });
    let stats: Vec<String> = chi.iter().map(|(s, c)| format!("{s:.1}/{c:.1}")).collect();
    Line {
        id: 7,
        name: "prioritized sampler",
        passed: chi_ok && stream_ok && overwrite_ok,
        detail: format!(
            "chi-square on 1e5 draws (stat/crit at 0.01) {}; D1 stream unaffected = {stream_ok}; overwrite idempotent = {overwrite_ok}",
            stats.join(", ")
        ),
    }
}

fn awr_line() -> Line {
    let adam = OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 };
    let runs = [
        common::awr_divergence(adam, ApproxSpec::Mlp { hidden: vec![8] }, &[0, 7]),
        common::awr_divergence(OptimizerKind::Sgd { momentum: 0.0 }, ApproxSpec::Mlp { hidden: vec![8, 8] }, &[3]),
    ];
    let first = runs.iter().flatten().next();
    Line {
        id: 8,
        name: "constant priority + L2 reduces to AWR",
        passed: first.is_none(),
        detail: match first {
            None => "policy, Q and V parameters bit-identical for 60 iterations on 3 seeds".into(),
            Some((s, k, what)) => format!("{what} differs at seed {s}, iteration {k}"),
        },
    }
}

fn cell(cells: &[AblationCell], loss: LossName, p: PriorityKind) -> &AblationCell {
    cells.iter().find(|c| c.loss == loss && c.priority == p).unwrap()
}

fn wins(a: &AblationCell, b: &AblationCell) -> usize {
    a.final_returns.iter().zip(&b.final_returns).filter(|(x, y)| x >= y).count()
}

fn directional(out: &Path) -> (Line, Vec<RunSummary>, Vec<std::path::PathBuf>) {
    let start = Instant::now();
    let mut passed = true;
    let mut parts = Vec::new();
    let mut summaries = Vec::new();
    let mut csvs = Vec::new();
    for (label, text) in [("bandit", BANDIT), ("gridworld", GRIDWORLD)] {
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        let dir = out.join(label);
        let cells = ablate(
            &cfg,
            &[LossName::L2, LossName::L1],
            &[PriorityKind::None, PriorityKind::ExpNormal],
            Profile::Desk,
            None,
            &dir,
            None,
            Mode::default_mode(),
        )
        .unwrap();
        let l2 = cell(&cells, LossName::L2, PriorityKind::None);
        let l1 = cell(&cells, LossName::L1, PriorityKind::None);
        let l2p = cell(&cells, LossName::L2, PriorityKind::ExpNormal);
        let l1p = cell(&cells, LossName::L1, PriorityKind::ExpNormal);
        let n = l2.final_returns.len();
        let cmp = [("L1≥L2", wins(l1, l2)), ("L2+PER≥L2", wins(l2p, l2)), ("L1+PER≥L1", wins(l1p, l1))];
        passed &= cmp.iter().all(|&(_, w)| w >= 2) && cells.iter().all(|c| c.status == "ok");
        let means: Vec<String> = [("L2", l2), ("L1", l1), ("L2+PER", l2p), ("L1+PER", l1p)]
            .iter()
            .map(|(n, c)| format!("{n} {:.4}", c.final_return_mean))
            .collect();
        let won: Vec<String> = cmp.iter().map(|(name, w)| format!("{name} {w}/{n}")).collect();
        parts.push(format!("{label}: {} (mean return {})", won.join(", "), means.join(", ")));
        for c in &cells {
            summaries.push(serde_json::from_str(&fs::read_to_string(c.dir.join("aggregate.json")).unwrap()).unwrap());
            for s in 0..3 {
                csvs.push(c.dir.join(format!("seed_{s}/metrics.csv")));
            }
        }
    }
    let seconds = start.elapsed().as_secs_f64();
    passed &= seconds <= 600.0;
    let line = Line {
        id: 9,
        name: "desk-scale directional result",
        passed,
        detail: format!("{}; {:.1} s (≤ 600 s)", parts.join("; "), seconds),
    };
    (line, summaries, csvs)
}

fn score_line(summaries: &[RunSummary], csvs: &[std::path::PathBuf]) -> Line {
    let hopper = ScoreTable::d4rl().get("hopper-medium-v2").unwrap();
    let expert = normalized_score(hopper.j_expert, &hopper).unwrap();
    let random = normalized_score(hopper.j_random, &hopper).unwrap();
    let endpoints = expert == 100.0 && random == 0.0;
    let mut reports = 0;
    let mut monotone = true;
    for path in csvs {
        let text = fs::read_to_string(path).unwrap();
        let ks: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(4).unwrap().parse().unwrap()).collect();
        monotone &= ks.windows(2).all(|w| w[1] >= w[0]);
        reports += 1;
    }
    for s in summaries {
        monotone &= s.points.windows(2).all(|w| w[1].score_k >= w[0].score_k);
        reports += 1;
    }
    Line {
        id: 10,
        name: "normalized score plumbing",
        passed: endpoints && monotone && reports > 0,
        detail: format!("hopper expert → {expert}, random → {random}; score_k monotone on {reports} reports = {monotone}"),
    }
}

fn main() {
    // `cargo test -- --list` and filters are not meaningful for this runner.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut lines = Vec::new();
    let report = run_suite(&SuiteConfig::default(), Mode::default_mode()).expect("oracle suite");
    lines.extend(oracle_lines(&report));
    lines.push(gradient_line());
    lines.push(sampler_line());
    lines.push(awr_line());
    let out = tempfile::tempdir().unwrap();
    let (line, summaries, csvs) = directional(out.path());
    lines.push(line);
    lines.push(score_line(&summaries, &csvs));

    let mut failed = 0;
    for l in &lines {
        println!("criterion {:>2} {} {}: {}", l.id, if l.passed { "PASS" } else { "FAIL" }, l.name, l.detail);
        failed += usize::from(!l.passed);
    }
    println!("acceptance: {} of {} criteria passed", lines.len() - failed, lines.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

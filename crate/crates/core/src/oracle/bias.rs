use serde::{Deserialize, Serialize};

use super::quad::normal_expectation;
use crate::error::{Error, Result};
use crate::loss::RobustLoss;
use crate::mdp::{MixtureBehavior, PolicyDescriptor};

/// A one-dimensional action distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Component {
    Atom { at: f64 },
    Normal { mean: f64, std: f64 },
}

impl Component {
    fn from_descriptor(d: &PolicyDescriptor) -> Result<Self> {
        match d {
            PolicyDescriptor::Gaussian { mean, std } if mean.len() == 1 => Ok(if *std == 0.0 {
                Component::Atom { at: mean[0] }
            } else {
                Component::Normal { mean: mean[0], std: *std }
            }),
            _ => Err(Error::validation("bias bound needs 1-D Gaussian or point-mass components")),
        }
    }

    fn expect(&self, breaks: &[f64], g: &dyn Fn(f64) -> f64) -> f64 {
        match *self {
            Component::Atom { at } => g(at),
            Component::Normal { mean, std } => normal_expectation(mean, std, breaks, g),
        }
    }

    /// Range treated as the support for grids and convexity checks.
    fn span(&self, reach: f64) -> (f64, f64) {
        match *self {
            Component::Atom { at } => (at, at),
            Component::Normal { mean, std } => (mean - reach * std, mean + reach * std),
        }
    }

    fn atom(&self) -> Option<f64> {
        match *self {
            Component::Atom { at } => Some(at),
            Component::Normal { .. } => None,
        }
    }
}

/// The regression weight as a function of the action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Weighting {
    Constant { w: f64 },
    /// `min(exp(A(a)/λ), w_max)` with the bandit advantage `A(a) = −(a − target)²`.
    BanditAdvantage { target: f64, lambda: f64, w_max: f64 },
}

impl Weighting {
    pub fn weight(&self, a: f64) -> f64 {
        match *self {
            Weighting::Constant { w } => w,
            Weighting::BanditAdvantage { target, lambda, w_max } => (-(a - target) * (a - target) / lambda).exp().min(w_max),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Weighting::Constant { w } => w > 0.0 && w.is_finite(),
            Weighting::BanditAdvantage { target, lambda, w_max } => target.is_finite() && lambda > 0.0 && w_max > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config("weights must be positive and finite"))
        }
    }
}

/// Whether the general Hessian bound could be evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Applicability {
    Applicable,
    /// The loss has no second derivative somewhere on the support.
    NotSmooth,
    /// Some action lies outside the loss's convex region around the bracket.
    OutsideConvexRegion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub mu_star: f64,
    pub mu_plus: f64,
    pub bias: f64,
    /// Closed-form bound for the L2 loss.
    pub corollary_bound: Option<f64>,
    /// Hessian-expectation bound with the Taylor point bracketed between `μ⁺` and `μ*`.
    pub general_bound: Option<f64>,
    pub applicability: Applicability,
    /// `None` when no bound applies to this loss.
    pub holds: Option<bool>,
    /// Both objectives have a single grid minimum.
    pub unimodal: bool,
    /// Every near-optimal grid minimum of the mixture objective.
    pub minima: Vec<f64>,
    /// `|closed form − brute force|` for the L2 minimizer.
    pub brute_force_gap: Option<f64>,
}

const GRID: usize = 400;
const GOLDEN_TOL: f64 = 1e-8;
const TIE: f64 = 1e-6;
const REACH: f64 = 4.0;
const SUPPORT_REACH: f64 = 6.0;
const BRACKET_POINTS: usize = 33;
const SLACK: f64 = 1e-12;

struct Problem<'a> {
    parts: Vec<(f64, Component)>,
    weight: &'a Weighting,
    loss: &'a RobustLoss,
}

impl Problem<'_> {
    fn breaks(&self, mu: f64) -> Vec<f64> {
        match *self.loss {
            RobustLoss::Huber { kappa } => vec![mu - kappa, mu, mu + kappa],
            _ => vec![mu],
        }
    }

    fn expect(&self, breaks: &[f64], g: &dyn Fn(f64) -> f64) -> f64 {
        self.parts
            .iter()
            .filter(|(c, _)| *c > 0.0)
            .map(|(c, comp)| c * comp.expect(breaks, g))
            .sum()
    }

    fn objective(&self, mu: f64) -> f64 {
        let w = self.weight;
        let f = self.loss;
        self.expect(&self.breaks(mu), &|a| w.weight(a) * f.value(a - mu))
    }

    fn range(&self) -> (f64, f64) {
        self.parts
            .iter()
            .filter(|(c, _)| *c > 0.0)
            .map(|(_, comp)| comp.span(REACH))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| (lo.min(a), hi.max(b)))
    }

    fn weighted_mean(&self) -> f64 {
        let w = self.weight;
        let num = self.expect(&[], &|a| w.weight(a) * a);
        let den = self.expect(&[], &|a| w.weight(a));
        num / den
    }

    fn atoms(&self) -> Vec<f64> {
        self.parts.iter().filter(|(c, _)| *c > 0.0).filter_map(|(_, comp)| comp.atom()).collect()
    }

    /// Grid scan, golden-section refinement of each near-optimal grid minimum,
    /// then a comparison against any atom inside the refined bracket.
    fn minimize(&self) -> (f64, Vec<f64>, bool) {
        let (lo, hi) = self.range();
        if hi - lo < 1e-12 {
            return (lo, vec![lo], true);
        }
        let h = (hi - lo) / GRID as f64;
        let xs: Vec<f64> = (0..=GRID).map(|i| if i == GRID { hi } else { lo + i as f64 * h }).collect();
        let vs: Vec<f64> = xs.iter().map(|&x| self.objective(x)).collect();
        let best = vs.iter().copied().fold(f64::INFINITY, f64::min);
        let tol = TIE * best.abs().max(1.0);
        let is_min = |i: usize| (i == 0 || vs[i] <= vs[i - 1]) && (i == GRID || vs[i] <= vs[i + 1]) && vs[i] <= best + tol;
        let mut clusters: Vec<(usize, usize)> = Vec::new();
        for i in (0..=GRID).filter(|&i| is_min(i)) {
            match clusters.last_mut() {
                Some((_, end)) if *end + 1 == i => *end = i,
                _ => clusters.push((i, i)),
            }
        }
        let unique = clusters.len() == 1 && clusters[0].0 == clusters[0].1;
        let atoms = self.atoms();
        let mut refined: Vec<(f64, f64)> = clusters
            .iter()
            .map(|&(a, b)| {
                let left = xs[a.saturating_sub(1)];
                let right = xs[(b + 1).min(GRID)];
                let mut x = self.golden(left, right);
                let mut v = self.objective(x);
                for &atom in atoms.iter().filter(|&&t| t >= left && t <= right) {
                    let va = self.objective(atom);
                    if va <= v {
                        x = atom;
                        v = va;
                    }
                }
                (x, v)
            })
            .collect();
        refined.sort_by(|a, b| a.1.total_cmp(&b.1));
        let minima: Vec<f64> = refined.iter().map(|r| r.0).collect();
        (refined[0].0, minima, unique)
    }

    fn golden(&self, mut a: f64, mut b: f64) -> f64 {
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        let (mut fc, mut fd) = (self.objective(c), self.objective(d));
        while b - a > GOLDEN_TOL {
            if fc <= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = self.objective(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = self.objective(d);
            }
        }
        0.5 * (a + b)
    }
}

/// `sup_{0 ≤ u ≤ r} |f'(u)|` for losses symmetric in `u` whose `|f'|` rises to
/// a single peak and then falls.
fn grad_sup(loss: &RobustLoss, peak: f64, r: f64) -> f64 {
    loss.grad(r.min(peak)).abs()
}

/// Measures the bias `|μ* − μ⁺|` of the weighted regression minimizer under
/// the corrupted mixture and compares it with the applicable upper bounds.
pub fn check_bias_bound(mixture: &MixtureBehavior, weight: &Weighting, loss: &RobustLoss) -> Result<BiasReport> {
    loss.validate()?;
    weight.validate()?;
    let good = Component::from_descriptor(&mixture.good)?;
    let poor = Component::from_descriptor(&mixture.poor)?;
    let eps = mixture.epsilon;
    let full = Problem {
        parts: vec![(1.0 - eps, good), (eps, poor)],
        weight,
        loss,
    };
    let clean = Problem {
        parts: vec![(1.0, good)],
        weight,
        loss,
    };
    let (mut mu_star, minima, uni_star) = full.minimize();
    let (mut mu_plus, _, uni_plus) = clean.minimize();
    let mut brute_force_gap = None;
    if matches!(loss, RobustLoss::L2) {
        let exact = full.weighted_mean();
        brute_force_gap = Some((exact - mu_star).abs());
        mu_star = exact;
        mu_plus = clean.weighted_mean();
    }
    let bias = (mu_star - mu_plus).abs();

    let poor_only = Problem {
        parts: vec![(1.0, poor)],
        weight,
        loss,
    };
    let total_w = full.expect(&[], &|a| weight.weight(a));
    let corollary_bound = matches!(loss, RobustLoss::L2).then(|| {
        eps * poor_only.expect(&[mu_plus], &|a| weight.weight(a) * (a - mu_plus).abs()) / total_w
    });

    let smooth = matches!(loss, RobustLoss::L2 | RobustLoss::Flat { .. });
    let (lo, hi) = (mu_star.min(mu_plus), mu_star.max(mu_plus));
    let applicability = if !smooth {
        Applicability::NotSmooth
    } else {
        let (s_lo, s_hi) = [good, poor]
            .iter()
            .map(|c| c.span(SUPPORT_REACH))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (x, y)| (a.min(x), b.max(y)));
        let reach = (s_hi - lo).max(hi - s_lo);
        if reach <= loss.convex_radius() {
            Applicability::Applicable
        } else {
            Applicability::OutsideConvexRegion
        }
    };
    let general_bound = (applicability == Applicability::Applicable).then(|| {
        let curvature = (0..BRACKET_POINTS)
            .map(|i| {
                let xi = lo + (hi - lo) * i as f64 / (BRACKET_POINTS - 1) as f64;
                full.expect(&[xi], &|a| weight.weight(a) * loss.second(a - xi))
            })
            .fold(f64::INFINITY, f64::min);
        // |f'| peaks where f'' changes sign, at the edge of the convex region.
        let peak = loss.convex_radius();
        let slope = poor_only.expect(&[mu_plus], &|a| weight.weight(a) * grad_sup(loss, peak, (a - mu_plus).abs()));
        if curvature > 0.0 {
            eps * slope / curvature
        } else {
            f64::INFINITY
        }
    });
    let bound = corollary_bound.or(general_bound);
    let holds = bound.map(|b| bias <= b + SLACK * b.max(1.0));
    Ok(BiasReport {
        mu_star,
        mu_plus,
        bias,
        corollary_bound,
        general_bound,
        applicability,
        holds,
        unimodal: uni_star && uni_plus,
        minima,
        brute_force_gap,
    })
}

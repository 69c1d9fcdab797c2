//! Robust per-coordinate regression losses `f(u)`, `u = a − μ(s)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A member of the robust loss family. Every member satisfies `f(0) = 0`.
///
/// Flat and Skew carry a normalizer `c₄` fixed by `f(0) = 0`; it is derived,
/// never stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RobustLoss {
    L2,
    L1,
    Huber { kappa: f64 },
    /// `−log(c₂·exp(−c₁u²) + c₃) + c₄`
    Flat { c1: f64, c2: f64, c3: f64 },
    /// `−log(c₂·(exp(−c₁u²) + 1/(c₃|u| + 1))) + c₄`
    Skew { c1: f64, c2: f64, c3: f64 },
}

pub const DEFAULT_KAPPA: f64 = 0.2;

impl RobustLoss {
    pub fn huber() -> Self {
        RobustLoss::Huber { kappa: DEFAULT_KAPPA }
    }

    /// `(c₁, c₂, c₃) = (2/σ², 1/σ, 0.5)`.
    pub fn flat_for_sigma(sigma: f64) -> Self {
        RobustLoss::Flat {
            c1: 2.0 / (sigma * sigma),
            c2: 1.0 / sigma,
            c3: 0.5,
        }
    }

    /// `(c₁, c₂, c₃) = (1/σ², 1/σ, 1/σ)`.
    pub fn skew_for_sigma(sigma: f64) -> Self {
        RobustLoss::Skew {
            c1: 1.0 / (sigma * sigma),
            c2: 1.0 / sigma,
            c3: 1.0 / sigma,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RobustLoss::L2 => "l2",
            RobustLoss::L1 => "l1",
            RobustLoss::Huber { .. } => "huber",
            RobustLoss::Flat { .. } => "flat",
            RobustLoss::Skew { .. } => "skew",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |x: f64| x > 0.0 && x.is_finite();
        match *self {
            RobustLoss::L2 | RobustLoss::L1 => Ok(()),
            RobustLoss::Huber { kappa } if pos(kappa) => Ok(()),
            RobustLoss::Huber { kappa } => Err(Error::config(format!("huber kappa must be positive, got {kappa}"))),
            RobustLoss::Flat { c1, c2, c3 } | RobustLoss::Skew { c1, c2, c3 } => {
                if pos(c1) && pos(c2) && pos(c3) {
                    Ok(())
                } else {
                    Err(Error::config(format!(
                        "{} constants must be positive, got ({c1}, {c2}, {c3})",
                        self.name()
                    )))
                }
            }
        }
    }

    /// Normalizer making `f(0) = 0` (zero for the piecewise kinds).
    pub fn c4(&self) -> f64 {
        match *self {
            RobustLoss::Flat { c2, c3, .. } => (c2 + c3).ln(),
            RobustLoss::Skew { c2, .. } => (2.0 * c2).ln(),
            _ => 0.0,
        }
    }

    pub fn value(&self, u: f64) -> f64 {
        match *self {
            RobustLoss::L2 => u * u,
            RobustLoss::L1 => u.abs(),
            RobustLoss::Huber { kappa } => {
                if u.abs() <= kappa {
                    u * u
                } else {
                    2.0 * kappa * u.abs() - kappa * kappa
                }
            }
            RobustLoss::Flat { c1, c2, c3 } => {
                // −log(c₂e^{−c₁u²} + c₃) + log(c₂ + c₃), computed without cancellation.
                let e = (-c1 * u * u).exp();
                -((c2 * e + c3) / (c2 + c3)).ln()
            }
            RobustLoss::Skew { c1, c3, .. } => {
                let e = (-c1 * u * u).exp();
                let h = 1.0 / (c3 * u.abs() + 1.0);
                -((e + h) / 2.0).ln()
            }
        }
    }

    /// Derivative; the subgradient 0 is used at the kinks of L1 and Skew.
    pub fn grad(&self, u: f64) -> f64 {
        match *self {
            RobustLoss::L2 => 2.0 * u,
            RobustLoss::L1 => {
                if u == 0.0 {
                    0.0
                } else {
                    u.signum()
                }
            }
            RobustLoss::Huber { kappa } => {
                if u.abs() <= kappa {
                    2.0 * u
                } else {
                    2.0 * kappa * u.signum()
                }
            }
            RobustLoss::Flat { c1, c2, c3 } => {
                let e = (-c1 * u * u).exp();
                2.0 * c1 * u * c2 * e / (c2 * e + c3)
            }
            RobustLoss::Skew { c1, c3, .. } => {
                if u == 0.0 {
                    return 0.0;
                }
                let x = u.abs();
                let e = (-c1 * x * x).exp();
                let h = 1.0 / (c3 * x + 1.0);
                let dg = -2.0 * c1 * x * e - c3 * h * h;
                u.signum() * (-dg / (e + h))
            }
        }
    }

    /// Second derivative where it exists (one-sided at kinks).
    pub fn second(&self, u: f64) -> f64 {
        match *self {
            RobustLoss::L2 => 2.0,
            RobustLoss::L1 => 0.0,
            RobustLoss::Huber { kappa } => {
                if u.abs() <= kappa {
                    2.0
                } else {
                    0.0
                }
            }
            RobustLoss::Flat { c1, c2, c3 } => {
                let e = (-c1 * u * u).exp();
                let g = c2 * e + c3;
                let g1 = -2.0 * c1 * u * c2 * e;
                let g2 = c2 * e * (4.0 * c1 * c1 * u * u - 2.0 * c1);
                (g1 * g1 - g * g2) / (g * g)
            }
            RobustLoss::Skew { c1, c3, .. } => {
                // c₂ cancels in (g′² − g·g″)/g².
                let x = u.abs();
                let e = (-c1 * x * x).exp();
                let h = 1.0 / (c3 * x + 1.0);
                let g = e + h;
                let g1 = -2.0 * c1 * x * e - c3 * h * h;
                let g2 = e * (4.0 * c1 * c1 * x * x - 2.0 * c1) + 2.0 * c3 * c3 * h * h * h;
                (g1 * g1 - g * g2) / (g * g)
            }
        }
    }

    /// Radius of the largest interval `(−r, r)` on which `f` is convex.
    pub fn convex_radius(&self) -> f64 {
        let c1 = match *self {
            RobustLoss::L2 | RobustLoss::L1 | RobustLoss::Huber { .. } => return f64::INFINITY,
            RobustLoss::Flat { c1, .. } | RobustLoss::Skew { c1, .. } => c1,
        };
        let scale = 1.0 / c1.sqrt();
        let step = scale / 256.0;
        let mut lo = 0.0;
        let mut hi = f64::NAN;
        for k in 1..=256 * 64 {
            let u = k as f64 * step;
            if self.second(u) <= 0.0 {
                hi = u;
                break;
            }
            lo = u;
        }
        if hi.is_nan() {
            return f64::INFINITY;
        }
        while hi - lo > 1e-8 {
            let mid = 0.5 * (lo + hi);
            if self.second(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Scales `c₁` by `1 + rate·progress`, shrinking the convex region as training advances.
    pub fn tighten(&self, progress: f64, rate: f64) -> Self {
        let m = 1.0 + rate * progress.clamp(0.0, 1.0);
        match *self {
            RobustLoss::Flat { c1, c2, c3 } => RobustLoss::Flat { c1: c1 * m, c2, c3 },
            RobustLoss::Skew { c1, c2, c3 } => RobustLoss::Skew { c1: c1 * m, c2, c3 },
            other => other,
        }
    }
}

impl std::fmt::Display for RobustLoss {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

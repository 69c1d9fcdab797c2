use std::f64::consts::PI;
use std::sync::OnceLock;

/// An `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Nodes by Newton iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> GaussLegendre {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    GaussLegendre { nodes, weights }
}

const NODES: usize = 20;
const PANELS: usize = 6;
/// Half-width of the integration window in standard deviations.
const REACH: f64 = 10.0;

fn rule() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(NODES))
}

/// `E[g(a)]` for `a ~ N(mean, std²)`, integrating piecewise between the
/// `breaks` that fall inside the window so kinks of `g` land on panel edges.
pub(crate) fn normal_expectation(mean: f64, std: f64, breaks: &[f64], g: &dyn Fn(f64) -> f64) -> f64 {
    let lo = mean - REACH * std;
    let hi = mean + REACH * std;
    let mut cuts = vec![lo];
    for &b in breaks {
        if b > lo && b < hi {
            cuts.push(b);
        }
    }
    cuts.push(hi);
    cuts.sort_by(f64::total_cmp);
    let r = rule();
    let (mut num, mut den) = (0.0, 0.0);
    for seg in cuts.windows(2) {
        let width = (seg[1] - seg[0]) / PANELS as f64;
        if width <= 0.0 {
            continue;
        }
        for p in 0..PANELS {
            let mid = seg[0] + (p as f64 + 0.5) * width;
            for (x, w) in r.nodes.iter().zip(&r.weights) {
                let a = mid + 0.5 * width * x;
                let z = (a - mean) / std;
                let dens = w * 0.5 * width * (-0.5 * z * z).exp();
                num += dens * g(a);
                den += dens;
            }
        }
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_integrates_polynomials() {
        let r = gauss_legendre(8);
        assert!((r.weights.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        let x14: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(14)).sum();
        assert!((x14 - 2.0 / 15.0).abs() < 1e-14);
        let one = gauss_legendre(1);
        assert_eq!(one.nodes, vec![0.0]);
        assert!((one.weights[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn normal_moments() {
        let m2 = normal_expectation(0.3, 1.7, &[], &|a| (a - 0.3) * (a - 0.3));
        assert!((m2 - 1.7 * 1.7).abs() < 1e-12);
        let abs = normal_expectation(0.0, 2.0, &[0.0], &|a: f64| a.abs());
        assert!((abs - 2.0 * (2.0 / PI).sqrt()).abs() < 1e-12);
    }
}

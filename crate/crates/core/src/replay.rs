//! Advantage-based priorities, a sum tree and the dual-batch replay buffer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary tree of partial sums over leaf priorities.
///
/// Internal nodes are recomputed as `left + right` on every write, so the
/// structure never accumulates drift.
#[derive(Debug, Clone, PartialEq)]
pub struct SumTree {
    len: usize,
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(len: usize, init: f64) -> Self {
        let leaves = len.max(1).next_power_of_two();
        let mut nodes = vec![0.0; 2 * leaves];
        nodes[leaves..leaves + len].fill(init);
        for i in (1..leaves).rev() {
            nodes[i] = nodes[2 * i] + nodes[2 * i + 1];
        }
        Self { len, leaves, nodes }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, i: usize) -> f64 {
        self.nodes[self.leaves + i]
    }

    pub fn set(&mut self, i: usize, p: f64) {
        let mut k = self.leaves + i;
        self.nodes[k] = p;
        while k > 1 {
            k /= 2;
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
    }

    /// Leaf whose cumulative interval contains `target ∈ [0, total)`.
    pub fn find(&self, mut target: f64) -> usize {
        let mut k = 1;
        while k < self.leaves {
            let left = self.nodes[2 * k];
            if target < left {
                k *= 2;
            } else {
                target -= left;
                k = 2 * k + 1;
            }
        }
        // Rounding at the right end can walk into zero-mass padding.
        let mut i = k - self.leaves;
        if i >= self.len {
            i = self.len - 1;
        }
        while self.get(i) == 0.0 && i > 0 {
            i -= 1;
        }
        i
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorityKind {
    /// `h ≡ 1`: prioritized sampling reduces to uniform.
    None,
    ExpStandard,
    ExpNormal,
    ExpQuantile,
    Odpr,
    Aw,
}

/// Which advantage statistics feed the centered schemes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StatsMode {
    /// Statistics of the latest `D₁ ∪ D₂` batch only.
    Batch,
    /// Exponential moving average of batch statistics.
    Ema { decay: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorityScheme {
    pub kind: PriorityKind,
    pub lambda: f64,
    #[serde(default = "default_quantile")]
    pub quantile_level: f64,
    #[serde(default = "one")]
    pub odpr_scale: f64,
    #[serde(default = "default_floor")]
    pub floor: f64,
    pub p_max: f64,
    #[serde(default = "batch_mode")]
    pub stats: StatsMode,
}

fn default_quantile() -> f64 {
    0.5
}
fn one() -> f64 {
    1.0
}
fn default_floor() -> f64 {
    1e-6
}
fn batch_mode() -> StatsMode {
    StatsMode::Batch
}

/// Advantage statistics `μ̂_A`, `σ̂_A`, `τ̂_A`, `min_A` and the AW normalizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdvantageStats {
    pub mean: f64,
    pub std: f64,
    pub quantile: f64,
    pub min: f64,
    /// `Σ_j exp(A_j/λ)` over last-written values, dataset-wide.
    pub aw_normalizer: f64,
}

impl AdvantageStats {
    /// Population statistics of `adv`; `quantile` by linear interpolation.
    pub fn from_batch(adv: &[f64], level: f64) -> Result<Self> {
        if adv.is_empty() {
            return Err(Error::validation("advantage statistics of an empty batch"));
        }
        if adv.iter().any(|a| !a.is_finite()) {
            return Err(Error::validation("non-finite advantage"));
        }
        let n = adv.len() as f64;
        let mean = adv.iter().sum::<f64>() / n;
        let std = (adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n).sqrt();
        let mut sorted = adv.to_vec();
        sorted.sort_by(f64::total_cmp);
        let pos = level * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let quantile = sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo]);
        Ok(Self {
            mean,
            std,
            quantile,
            min: sorted[0],
            aw_normalizer: f64::NAN,
        })
    }
}

impl PriorityScheme {
    pub fn new(kind: PriorityKind, lambda: f64, p_max: f64) -> Self {
        Self {
            kind,
            lambda,
            quantile_level: default_quantile(),
            odpr_scale: 1.0,
            floor: default_floor(),
            p_max,
            stats: StatsMode::Batch,
        }
    }

    pub fn constant() -> Self {
        Self::new(PriorityKind::None, 1.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |x: f64| x > 0.0 && x.is_finite();
        if !pos(self.lambda) || !pos(self.odpr_scale) || !pos(self.floor) || !(self.p_max >= self.floor) {
            return Err(Error::config(
                "priority lambda, odpr scale and floor must be positive, with p_max ≥ floor",
            ));
        }
        if !(self.quantile_level > 0.0 && self.quantile_level < 1.0) {
            return Err(Error::config(format!("quantile level {} outside (0, 1)", self.quantile_level)));
        }
        if let StatsMode::Ema { decay } = self.stats {
            if !(0.0..1.0).contains(&decay) {
                return Err(Error::config(format!("stats decay {decay} outside [0, 1)")));
            }
        }
        Ok(())
    }

    fn clip(&self, p: f64) -> f64 {
        p.max(self.floor).min(self.p_max)
    }

    /// Scale used by the centered schemes, or `None` when `σ̂_A = 0` forces the standard form.
    pub(crate) fn centered_scale(&self, stats: &AdvantageStats) -> Option<f64> {
        if stats.std > 0.0 {
            Some(self.lambda * stats.std)
        } else {
            None
        }
    }

    /// Unclipped `h(A)`.
    pub fn raw(&self, advantage: f64, stats: Option<&AdvantageStats>) -> Result<f64> {
        let need = || {
            stats.ok_or_else(|| Error::validation(format!("{:?} priorities need advantage statistics", self.kind)))
        };
        let standard = (advantage / self.lambda).exp();
        Ok(match self.kind {
            PriorityKind::None => 1.0,
            PriorityKind::ExpStandard => standard,
            PriorityKind::ExpNormal | PriorityKind::ExpQuantile => {
                let st = need()?;
                let center = if self.kind == PriorityKind::ExpNormal { st.mean } else { st.quantile };
                match self.centered_scale(st) {
                    Some(scale) => ((advantage - center) / scale).exp(),
                    None => {
                        log::warn!("advantage std is zero; falling back to exp(A/λ) priorities");
                        standard
                    }
                }
            }
            PriorityKind::Odpr => (self.odpr_scale * (advantage - need()?.min)).max(self.floor),
            PriorityKind::Aw => {
                let z = need()?.aw_normalizer;
                if !(z > 0.0) {
                    return Err(Error::validation("AW priorities need a positive normalizer"));
                }
                standard / z
            }
        })
    }

    /// `h(A)` clipped to `[floor, p_max]`; `h ≡ 1` is left unclipped.
    pub fn priority(&self, advantage: f64, stats: Option<&AdvantageStats>) -> Result<f64> {
        let raw = self.raw(advantage, stats)?;
        Ok(if self.kind == PriorityKind::None { raw } else { self.clip(raw) })
    }
}

/// Priorities over a dataset's indices with uniform and prioritized draws.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    scheme: PriorityScheme,
    tree: SumTree,
    stats: Option<AdvantageStats>,
    aw_terms: Vec<f64>,
    aw_sum: f64,
}

impl ReplayBuffer {
    /// All priorities start at 1.
    pub fn new(len: usize, scheme: PriorityScheme) -> Result<Self> {
        scheme.validate()?;
        if len == 0 {
            return Err(Error::validation("replay buffer over an empty dataset"));
        }
        let aw_terms = if scheme.kind == PriorityKind::Aw { vec![1.0; len] } else { Vec::new() };
        Ok(Self {
            scheme,
            tree: SumTree::new(len, 1.0),
            stats: None,
            aw_sum: aw_terms.iter().sum(),
            aw_terms,
        })
    }

    pub fn len(&self) -> usize {
        self.tree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.is_empty()
    }

    pub fn scheme(&self) -> &PriorityScheme {
        &self.scheme
    }

    pub fn stats(&self) -> Option<&AdvantageStats> {
        self.stats.as_ref()
    }

    pub fn priority(&self, i: usize) -> f64 {
        self.tree.get(i)
    }

    pub fn priorities(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.tree.get(i)).collect()
    }

    pub fn probability(&self, i: usize) -> f64 {
        self.tree.get(i) / self.tree.total()
    }

    /// Shannon entropy (nats) of the sampling distribution.
    pub fn entropy(&self) -> f64 {
        let total = self.tree.total();
        (0..self.len())
            .map(|i| self.tree.get(i) / total)
            .filter(|&p| p > 0.0)
            .map(|p| -p * p.ln())
            .sum()
    }

    /// `n` i.i.d. uniform indices: `⌊u·|D|⌋` for `u ~ U[0, 1)`.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<usize> {
        let len = self.len();
        (0..n).map(|_| uniform_index(rng.random::<f64>(), len)).collect()
    }

    /// `n` indices drawn with replacement with `P(i) = p_i / Σ p`.
    ///
    /// With all priorities equal this consumes the generator exactly as
    /// [`ReplayBuffer::sample_uniform`] does and returns the same indices.
    pub fn sample_prioritized<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<usize> {
        let total = self.tree.total();
        (0..n).map(|_| self.tree.find(rng.random::<f64>() * total)).collect()
    }

    /// Recomputes the statistics from the advantages of the current batch.
    pub fn refresh_stats(&mut self, advantages: &[f64]) -> Result<AdvantageStats> {
        let mut fresh = AdvantageStats::from_batch(advantages, self.scheme.quantile_level)?;
        if let (StatsMode::Ema { decay }, Some(old)) = (self.scheme.stats, self.stats) {
            let mix = |a: f64, b: f64| decay * a + (1.0 - decay) * b;
            fresh.mean = mix(old.mean, fresh.mean);
            fresh.std = mix(old.std, fresh.std);
            fresh.quantile = mix(old.quantile, fresh.quantile);
            fresh.min = mix(old.min, fresh.min);
        }
        fresh.aw_normalizer = self.aw_sum;
        self.stats = Some(fresh);
        Ok(fresh)
    }

    /// Overwrites `p_i ← h(A_i)` at `indices` using the stored statistics.
    pub fn write_priorities(&mut self, indices: &[usize], advantages: &[f64]) -> Result<()> {
        if indices.len() != advantages.len() {
            return Err(Error::Dimension {
                expected: indices.len(),
                got: advantages.len(),
            });
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::validation(format!("priority index {bad} out of range {}", self.len())));
        }
        if self.scheme.kind == PriorityKind::None {
            return Ok(());
        }
        if self.scheme.kind == PriorityKind::Aw {
            for (&i, &a) in indices.iter().zip(advantages) {
                let e = (a / self.scheme.lambda).exp().min(1e300);
                self.aw_sum += e - self.aw_terms[i];
                self.aw_terms[i] = e;
            }
            if let Some(st) = self.stats.as_mut() {
                st.aw_normalizer = self.aw_sum;
            }
        }
        let stats = self.stats;
        for (&i, &a) in indices.iter().zip(advantages) {
            let p = self.scheme.priority(a, stats.as_ref())?;
            self.tree.set(i, p);
        }
        Ok(())
    }

    /// Refreshes statistics from `advantages`, then overwrites the priorities.
    pub fn update_priorities(&mut self, indices: &[usize], advantages: &[f64]) -> Result<()> {
        self.refresh_stats(advantages)?;
        self.write_priorities(indices, advantages)
    }
}

#[inline]
pub(crate) fn uniform_index(u: f64, len: usize) -> usize {
    ((u * len as f64) as usize).min(len - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::new_rng;

    fn scheme(kind: PriorityKind) -> PriorityScheme {
        PriorityScheme::new(kind, 0.2, 1e4)
    }

    fn stats(adv: &[f64]) -> AdvantageStats {
        AdvantageStats::from_batch(adv, 0.5).unwrap()
    }

    #[test]
    fn scalar_priorities() {
        let s = scheme(PriorityKind::ExpStandard);
        assert_eq!(s.priority(0.0, None).unwrap(), 1.0);
        assert!((s.raw(0.5, None).unwrap() - 2.5f64.exp()).abs() < 1e-12);
        assert!((s.raw(0.5, None).unwrap() - 12.182).abs() < 1e-3);

        let adv = [0.2, 0.5, -0.1];
        let st = stats(&adv);
        let odpr = PriorityScheme::new(PriorityKind::Odpr, 0.2, 1e4);
        let raw: Vec<f64> = adv.iter().map(|&a| odpr.priority(a, Some(&st)).unwrap()).collect();
        assert!((raw[0] - 0.3).abs() < 1e-12 && (raw[1] - 0.6).abs() < 1e-12);
        assert_eq!(raw[2], odpr.floor);
    }

    #[test]
    fn aw_is_a_softmax() {
        let mut buf = ReplayBuffer::new(2, scheme(PriorityKind::Aw)).unwrap();
        buf.update_priorities(&[0, 1], &[0.3, 0.3]).unwrap();
        assert!((buf.priority(0) - 0.5).abs() < 1e-12);
        assert!((buf.priority(1) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_std_falls_back_to_standard() {
        let st = stats(&[0.4, 0.4]);
        let normal = scheme(PriorityKind::ExpNormal);
        let standard = scheme(PriorityKind::ExpStandard);
        assert_eq!(normal.priority(0.4, Some(&st)).unwrap(), standard.priority(0.4, None).unwrap());
    }

    #[test]
    fn clipping() {
        let s = scheme(PriorityKind::ExpStandard);
        assert_eq!(s.priority(1e3, None).unwrap(), 1e4);
        assert_eq!(s.priority(-1e3, None).unwrap(), 1e-6);
    }

    #[test]
    fn uniform_draws() {
        let buf = ReplayBuffer::new(1, PriorityScheme::constant()).unwrap();
        assert_eq!(buf.sample_uniform(&mut new_rng(0), 5), vec![0; 5]);
        let buf = ReplayBuffer::new(10, PriorityScheme::constant()).unwrap();
        let draws = buf.sample_uniform(&mut new_rng(1), 1_000_000);
        let mut counts = [0usize; 10];
        draws.iter().for_each(|&i| counts[i] += 1);
        assert!(counts.iter().all(|&c| (0.09..=0.11).contains(&(c as f64 / 1e6))));
        assert_eq!(buf.sample_uniform(&mut new_rng(3), 64), buf.sample_uniform(&mut new_rng(3), 64));
    }

    #[test]
    fn equal_priorities_reproduce_uniform_stream() {
        for len in [1, 3, 7, 8, 1000, 1023] {
            let buf = ReplayBuffer::new(len, PriorityScheme::constant()).unwrap();
            assert_eq!(
                buf.sample_uniform(&mut new_rng(5), 4096),
                buf.sample_prioritized(&mut new_rng(5), 4096)
            );
        }
    }

    #[test]
    fn proportional_frequencies() {
        let mut buf = ReplayBuffer::new(2, scheme(PriorityKind::ExpStandard)).unwrap();
        buf.tree.set(0, 3.0);
        let draws = buf.sample_prioritized(&mut new_rng(2), 100_000);
        let f0 = draws.iter().filter(|&&i| i == 0).count() as f64 / 1e5;
        assert!((f0 - 0.75).abs() <= 0.01);

        buf.tree.set(0, 1.0);
        buf.tree.set(1, 1e-6);
        let draws = buf.sample_prioritized(&mut new_rng(2), 100_000);
        let f1 = draws.iter().filter(|&&i| i == 1).count() as f64 / 1e5;
        assert!(f1 <= 2.0 * 1e-6 / (1.0 + 1e-6) + 1e-5);
    }

    #[test]
    fn overwrite_semantics() {
        let mut buf = ReplayBuffer::new(4, scheme(PriorityKind::ExpStandard)).unwrap();
        let adv = [0.0, 2f64.ln() * 0.2];
        buf.update_priorities(&[0, 1], &adv).unwrap();
        assert!((buf.priority(0) - 1.0).abs() < 1e-12);
        assert!((buf.priority(1) - 2.0).abs() < 1e-12);
        let snapshot = buf.priorities();
        buf.update_priorities(&[0, 1], &adv).unwrap();
        assert_eq!(buf.priorities(), snapshot);
        assert_eq!(buf.priority(2), 1.0);
        assert!(buf.update_priorities(&[9], &[0.0]).is_err());
    }
}

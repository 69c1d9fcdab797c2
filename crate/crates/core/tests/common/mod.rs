//! Checks shared by the focused integration tests and the acceptance runner.
#![allow(dead_code)]

use cawr::approx::{Model, Optimizer, OptimizerKind};
use cawr::harness::{ExperimentConfig, Profile};
use cawr::loss::RobustLoss;
use cawr::mdp::{new_rng, Dataset, Transition};
use cawr::policy::{init_models, policy_loss, sampling_rng, ApproxSpec, CawrTrainer, DistributionKind, PolicySnapshot, TrainConfig};
use cawr::replay::{PriorityKind, PriorityScheme, ReplayBuffer};
use cawr::value::{expectile_grad, expectile_loss, ValueHyper, ValueSnapshot};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub const FD_REL: f64 = 1e-5;

#[derive(Debug, Clone, Default)]
pub struct FdTally {
    pub probes: usize,
    pub failures: usize,
    pub worst: f64,
    pub first_failure: Option<String>,
}

impl FdTally {
    fn record(&mut self, analytic: f64, numeric: f64, what: impl FnOnce() -> String) {
        self.probes += 1;
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4);
        self.worst = self.worst.max(err);
        // Relative tolerance with an absolute floor where the gradient is numerically zero.
        if (analytic - numeric).abs() > FD_REL * analytic.abs().max(numeric.abs()) + 1e-9 {
            self.failures += 1;
            self.first_failure.get_or_insert_with(|| format!("{}: {analytic} vs {numeric}", what()));
        }
    }

    pub fn ok(&self) -> bool {
        self.failures == 0
    }
}

pub fn losses() -> Vec<RobustLoss> {
    vec![
        RobustLoss::L2,
        RobustLoss::L1,
        RobustLoss::huber(),
        RobustLoss::flat_for_sigma(1.0),
        RobustLoss::skew_for_sigma(1.0),
    ]
}

fn central(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    let h = 1e-6 * x.abs().max(1.0);
    (f(x + h) - f(x - h)) / (2.0 * h)
}

pub fn random_batch(rng: &mut impl Rng, n: usize, sd: usize, ad: usize) -> Vec<Transition> {
    (0..n)
        .map(|i| Transition {
            state: (0..sd).map(|_| rng.random_range(-1.0..1.0)).collect(),
            action: (0..ad).map(|_| rng.random_range(-2.0..2.0)).collect(),
            reward: rng.random_range(-1.0..1.0),
            next_state: (0..sd).map(|_| rng.random_range(-1.0..1.0)).collect(),
            terminal: rng.random_bool(0.2),
            index: i,
        })
        .collect()
}

/// `f′` against central differences of `f`, away from the kinks at 0 and ±κ.
pub fn fd_scalar_loss(loss: &RobustLoss, probes: usize, seed: u64) -> FdTally {
    let mut rng = new_rng(seed);
    let kappa = match *loss {
        RobustLoss::Huber { kappa } => Some(kappa),
        _ => None,
    };
    let mut t = FdTally::default();
    while t.probes < probes {
        let u: f64 = rng.random_range(-4.0..4.0);
        if u.abs() < 1e-3 || kappa.is_some_and(|k| (u.abs() - k).abs() < 1e-3) {
            continue;
        }
        t.record(loss.grad(u), central(|x| loss.value(x), u), || format!("{} at u = {u}", loss.name()));
    }
    t
}

/// Parameter gradient of the weighted policy objective through an MLP mean.
pub fn fd_policy_objective(loss: &RobustLoss, probes: usize, seed: u64) -> FdTally {
    let mut rng = new_rng(seed);
    let mean = Model::mlp(&[2, 5, 2], &mut rng).unwrap();
    let mut policy = PolicySnapshot::new(mean, 0.7, DistributionKind::GaussianFixedStd).unwrap();
    let batch = random_batch(&mut rng, 12, 2, 2);
    let refs: Vec<&Transition> = batch.iter().collect();
    let weights: Vec<f64> = (0..12).map(|_| rng.random_range(0.1..5.0)).collect();
    let (_, grad) = policy_loss(&policy, loss, &refs, &weights).unwrap();
    let mut t = FdTally::default();
    for _ in 0..probes {
        let k = rng.random_range(0..grad.len());
        let base = policy.mean.params().as_slice()[k];
        let mut at = |x: f64| {
            policy.mean.params_mut().update(|p| p[k] = x);
            let l = policy_loss(&policy, loss, &refs, &weights).unwrap().0;
            policy.mean.params_mut().update(|p| p[k] = base);
            l
        };
        let h = 1e-6;
        let fd = (at(base + h) - at(base - h)) / (2.0 * h);
        t.record(grad[k], fd, || format!("{} param {k}", loss.name()));
    }
    t
}

pub fn fd_expectile_scalar(probes: usize, seed: u64) -> FdTally {
    let mut rng = new_rng(seed);
    let mut t = FdTally::default();
    for i in 0..probes {
        let tau = [0.5, 0.7, 0.9][i % 3];
        let mut u: f64 = rng.random_range(-3.0..3.0);
        if u.abs() < 1e-3 {
            u = 0.5;
        }
        t.record(expectile_grad(u, tau).unwrap(), central(|x| expectile_loss(x, tau).unwrap(), u), || {
            format!("tau {tau}, u {u}")
        });
    }
    t
}

/// With plain SGD at unit rate the applied step is exactly the negative gradient.
fn value_gradients(snap: &ValueSnapshot, batch: &[&Transition]) -> (Vec<f64>, Vec<f64>) {
    let hyper = ValueHyper {
        v_lr: 1.0,
        q_lr: 1.0,
        ..snap.hyper
    };
    let mut stepped = ValueSnapshot::new(snap.q.clone(), snap.v.clone(), hyper).unwrap();
    stepped.q_target = snap.q_target.clone();
    stepped.v_k = snap.v_k.clone();
    let v0 = stepped.v.params().as_slice().to_vec();
    let q0 = stepped.q.params().as_slice().to_vec();
    stepped.update_value(batch).unwrap();
    stepped.update_q(batch).unwrap();
    let gv = v0.iter().zip(stepped.v.params().as_slice()).map(|(a, b)| a - b).collect();
    let gq = q0.iter().zip(stepped.q.params().as_slice()).map(|(a, b)| a - b).collect();
    (gv, gq)
}

/// Expectile `V` loss and TD `Q` loss, differentiated through MLPs.
pub fn fd_value_losses(probes: usize, seed: u64) -> (FdTally, FdTally) {
    let mut rng = new_rng(seed);
    let hyper = ValueHyper {
        tau: 0.7,
        gamma: 0.9,
        soft_update: 0.005,
        v_lr: 0.0,
        q_lr: 0.0,
        optimizer: OptimizerKind::Sgd { momentum: 0.0 },
    };
    let q = Model::mlp(&[3, 6, 1], &mut rng).unwrap();
    let v = Model::mlp(&[2, 6, 1], &mut rng).unwrap();
    let mut frozen = ValueSnapshot::new(q, v, hyper).unwrap();
    // Decouple the targets from the live networks.
    frozen.q_target = Model::mlp(&[3, 6, 1], &mut rng).unwrap();
    frozen.v_k = Model::mlp(&[2, 6, 1], &mut rng).unwrap();
    let batch = random_batch(&mut rng, 16, 2, 1);
    let refs: Vec<&Transition> = batch.iter().collect();
    let (gv, gq) = value_gradients(&frozen, &refs);

    let h = 1e-6;
    let (mut tv, mut tq) = (FdTally::default(), FdTally::default());
    for _ in 0..probes {
        let k = rng.random_range(0..gv.len());
        let at = |x: f64| {
            let mut s = frozen.clone();
            s.v.params_mut().update(|p| p[k] = x);
            s.update_value(&refs).unwrap()
        };
        let base = frozen.v.params().as_slice()[k];
        tv.record(gv[k], (at(base + h) - at(base - h)) / (2.0 * h), || format!("V param {k}"));

        let k = rng.random_range(0..gq.len());
        let at = |x: f64| {
            let mut s = frozen.clone();
            s.q.params_mut().update(|p| p[k] = x);
            s.update_q(&refs).unwrap()
        };
        let base = frozen.q.params().as_slice()[k];
        tq.record(gq[k], (at(base + h) - at(base - h)) / (2.0 * h), || format!("Q param {k}"));
    }
    (tv, tq)
}

/// Chi-square statistic of `counts` against `p`, and its upper-α critical value.
pub fn chi_square(counts: &[u64], p: &[f64], alpha: f64) -> (f64, f64) {
    let n: u64 = counts.iter().sum();
    let stat = counts
        .iter()
        .zip(p)
        .map(|(&c, &p)| {
            let e = p * n as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let crit = ChiSquared::new((p.len() - 1) as f64).unwrap().inverse_cdf(1.0 - alpha);
    (stat, crit)
}

/// Buffer with `exp(A/λ)` priorities on random advantages, and the target `p/Σp`.
pub fn prioritized_buffer(len: usize, seed: u64) -> (ReplayBuffer, Vec<f64>) {
    let lambda = 0.2;
    let mut buf = ReplayBuffer::new(len, PriorityScheme::new(PriorityKind::ExpStandard, lambda, 1e4)).unwrap();
    let mut rng = new_rng(seed);
    let adv: Vec<f64> = (0..len).map(|_| rng.random_range(-0.3..0.3)).collect();
    let idx: Vec<usize> = (0..len).collect();
    buf.write_priorities(&idx, &adv).unwrap();
    let raw: Vec<f64> = adv.iter().map(|a| (a / lambda).exp()).collect();
    let total: f64 = raw.iter().sum();
    (buf, raw.iter().map(|r| r / total).collect())
}

pub fn prioritized_chi_square(draws: usize, seed: u64) -> (f64, f64) {
    let (buf, p) = prioritized_buffer(50, seed);
    let mut counts = vec![0u64; p.len()];
    let mut rng = new_rng(100 + seed);
    for i in buf.sample_prioritized(&mut rng, draws) {
        counts[i] += 1;
    }
    chi_square(&counts, &p, 0.01)
}

/// Interleaves `D₁`/`D₂` draws with priority writes and compares the `D₁`
/// stream against a buffer that is never written.
pub fn uniform_stream_unaffected(rounds: usize) -> bool {
    let len = 64;
    let scheme = PriorityScheme::new(PriorityKind::ExpStandard, 0.2, 1e4);
    let mut written = ReplayBuffer::new(len, scheme).unwrap();
    let untouched = ReplayBuffer::new(len, scheme).unwrap();
    let (mut ra, mut rb) = (new_rng(5), new_rng(5));
    let mut noise = new_rng(6);
    for _ in 0..rounds {
        let d1a = written.sample_uniform(&mut ra, 16);
        let d2 = written.sample_prioritized(&mut ra, 16);
        let d1b = untouched.sample_uniform(&mut rb, 16);
        untouched.sample_prioritized(&mut rb, 16);
        if d1a != d1b {
            return false;
        }
        let adv: Vec<f64> = d2.iter().map(|_| noise.random_range(-2.0..2.0)).collect();
        written.write_priorities(&d2, &adv).unwrap();
    }
    true
}

/// Repeating a write leaves priorities unchanged, and a later write replaces an earlier one.
pub fn overwrite_idempotent(adv: &[f64], other: f64, kind: PriorityKind) -> bool {
    let len = adv.len();
    let idx: Vec<usize> = (0..len).collect();
    let mut buf = ReplayBuffer::new(len, PriorityScheme::new(kind, 0.5, 1e4)).unwrap();
    buf.refresh_stats(adv).unwrap();
    buf.write_priorities(&idx, adv).unwrap();
    let once = buf.priorities();
    buf.write_priorities(&idx, adv).unwrap();
    if buf.priorities() != once {
        return false;
    }
    // AW keeps a running normalizer, so only exact repeats are compared.
    if kind == PriorityKind::Aw {
        return true;
    }
    let mut seq = buf.clone();
    seq.write_priorities(&[0], &[other]).unwrap();
    seq.write_priorities(&[0], &[adv[0]]).unwrap();
    seq.priorities() == once
}

const AWR_TASK: &str = r#"
name = "awr"
[task]
kind = "gridworld"
width = 4
height = 3
goal = [3, 2]
slip = 0.1
gamma = 0.9
[data]
source = "generate"
episodes = 30
horizon = 8
epsilon = 0.5
seed = 3
good = { kind = "toward_goal" }
poor = { kind = "uniform" }
"#;

pub fn awr_setup(optimizer: OptimizerKind, approx: ApproxSpec) -> (Dataset, TrainConfig) {
    let cfg = ExperimentConfig::from_toml_str(AWR_TASK).unwrap();
    let mut train = cfg.resolve(Profile::Desk, None).unwrap().train;
    train.iterations = 60;
    train.batch_size = 32;
    train.loss = RobustLoss::L2;
    train.priority = PriorityScheme::constant();
    train.lambda = 0.3;
    train.w_max = 20.0;
    train.policy_lr = 0.01;
    train.policy_optimizer = optimizer;
    train.value.optimizer = optimizer;
    train.value.v_lr = 0.01;
    train.value.q_lr = 0.01;
    train.approx = approx;
    (cfg.dataset(None).unwrap(), train)
}

/// Plain AWR written from scratch: uniform draws for both batches,
/// `exp(A/λ)` weights and the squared-error policy gradient.
pub struct Awr<'d> {
    data: &'d [Transition],
    pub values: ValueSnapshot,
    pub mu: Model,
    opt: Optimizer,
    rng: ChaCha8Rng,
    cfg: TrainConfig,
}

impl<'d> Awr<'d> {
    pub fn new(dataset: &'d Dataset, cfg: &TrainConfig, seed: u64) -> Self {
        let (q, v, mu) = init_models(dataset, &cfg.approx, seed).unwrap();
        Self {
            data: dataset.transitions(),
            values: ValueSnapshot::new(q, v, cfg.value).unwrap(),
            opt: Optimizer::new(cfg.policy_optimizer, cfg.policy_lr, mu.n_params()),
            mu,
            rng: sampling_rng(seed),
            cfg: cfg.clone(),
        }
    }

    fn draw(&mut self) -> Vec<&'d Transition> {
        let len = self.data.len();
        (0..self.cfg.batch_size)
            .map(|_| {
                let u: f64 = self.rng.random();
                &self.data[((u * len as f64) as usize).min(len - 1)]
            })
            .collect()
    }

    pub fn step(&mut self, k: u64) {
        self.values.begin_iteration(k).unwrap();
        let b1 = self.draw();
        let b2 = self.draw();
        self.values.update_value(&b1).unwrap();
        self.values.update_q(&b1).unwrap();
        self.values.soft_update();

        let n = b2.len() as f64;
        let scale = 1.0 / (2.0 * self.cfg.sigma * self.cfg.sigma);
        let mut grad = vec![0.0; self.mu.n_params()];
        for t in &b2 {
            let a = self.values.advantage(&t.state, &t.action).unwrap();
            let w = ((1.0 / self.cfg.lambda) * a).exp().min(self.cfg.w_max).max(f64::MIN_POSITIVE);
            let (mu, tape) = self.mu.forward_tape(&t.state).unwrap();
            let c = w * scale;
            let dmu: Vec<f64> = t.action.iter().zip(&mu).map(|(a, m)| -c * (2.0 * (a - m)) / n).collect();
            self.mu.backward_into(&tape, &dmu, &mut grad).unwrap();
        }
        self.opt.step(self.mu.params_mut(), &grad, k).unwrap();
    }
}

fn bits(m: &Model) -> Vec<u64> {
    m.params().as_slice().iter().map(|x| x.to_bits()).collect()
}

/// First `(seed, iteration, network)` at which CAWR and the reference loop differ.
pub fn awr_divergence(optimizer: OptimizerKind, approx: ApproxSpec, seeds: &[u64]) -> Option<(u64, u64, &'static str)> {
    let (dataset, cfg) = awr_setup(optimizer, approx);
    for &seed in seeds {
        let mut cawr = CawrTrainer::new(&dataset, cfg.clone(), seed).unwrap();
        let mut awr = Awr::new(&dataset, &cfg, seed);
        for k in 0..cfg.iterations {
            cawr.step().unwrap();
            awr.step(k);
            for (what, a, b) in [
                ("policy", &cawr.policy().mean, &awr.mu),
                ("Q", &cawr.values().q, &awr.values.q),
                ("V", &cawr.values().v, &awr.values.v),
            ] {
                if bits(a) != bits(b) {
                    return Some((seed, k, what));
                }
            }
        }
    }
    None
}

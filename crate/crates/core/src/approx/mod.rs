//! Small differentiable function approximators with explicit reverse-mode gradients.

mod optim;

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::Discretizer;

pub use optim::{sgd_step, Optimizer, OptimizerKind};

/// Flat parameter storage with a version stamp bumped on every write.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    data: Vec<f64>,
    version: u64,
}

impl ParamVector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::validation("parameters must be finite"));
        }
        Ok(Self { data, version: 0 })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Mutable access; counts as a write.
    pub fn update<F: FnOnce(&mut [f64])>(&mut self, f: F) {
        f(&mut self.data);
        self.version += 1;
    }

    /// Overwrites with `other`'s values (same length), bumping the version.
    pub fn copy_from(&mut self, other: &ParamVector) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::Dimension {
                expected: self.len(),
                got: other.len(),
            });
        }
        self.update(|d| d.copy_from_slice(&other.data));
        Ok(())
    }
}

/// Network shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Arch {
    /// Fully connected, tanh hidden layers and a linear output. `sizes` includes input and output.
    Mlp { sizes: Vec<usize> },
    /// One learned output vector per discretizer cell.
    Tabular { cells: Discretizer, out_dim: usize },
}

impl Arch {
    pub fn n_params(&self) -> usize {
        match self {
            Arch::Mlp { sizes } => sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum(),
            Arch::Tabular { cells, out_dim } => cells.n_cells() * out_dim,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Arch::Mlp { sizes } => sizes[0],
            Arch::Tabular { cells, .. } => cells.dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Arch::Mlp { sizes } => *sizes.last().unwrap(),
            Arch::Tabular { out_dim, .. } => *out_dim,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Arch::Mlp { sizes } if sizes.len() < 2 || sizes.contains(&0) => {
                Err(Error::config("mlp needs at least input and output sizes, all positive"))
            }
            Arch::Tabular { out_dim: 0, .. } => Err(Error::config("tabular output dimension must be positive")),
            _ => Ok(()),
        }
    }
}

/// Record of one forward pass, consumed by [`Model::backward`].
#[derive(Debug, Clone)]
pub struct Tape {
    version: u64,
    /// Layer inputs: the network input followed by each hidden activation.
    acts: Vec<Vec<f64>>,
    cell: usize,
}

/// A network: architecture plus parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    arch: Arch,
    params: ParamVector,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    arch: Arch,
    version: u64,
    n_params: usize,
    params: Vec<f64>,
}

impl Model {
    pub fn new(arch: Arch, params: ParamVector) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.n_params() {
            return Err(Error::Dimension {
                expected: arch.n_params(),
                got: params.len(),
            });
        }
        Ok(Self { arch, params })
    }

    pub fn zeros(arch: Arch) -> Result<Self> {
        let n = arch.n_params();
        Self::new(arch, ParamVector::new(vec![0.0; n])?)
    }

    /// Glorot-uniform weights, zero biases.
    pub fn mlp<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        let arch = Arch::Mlp { sizes: sizes.to_vec() };
        arch.validate()?;
        let mut data = Vec::with_capacity(arch.n_params());
        for w in sizes.windows(2) {
            let bound = (6.0 / (w[0] + w[1]) as f64).sqrt();
            for _ in 0..w[0] * w[1] {
                data.push(rng.random_range(-bound..bound));
            }
            data.extend(std::iter::repeat_n(0.0, w[1]));
        }
        Self::new(arch, ParamVector::new(data)?)
    }

    /// Single linear layer initialised to the identity map.
    pub fn identity(n: usize) -> Result<Self> {
        let mut data = vec![0.0; n * n + n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self::new(Arch::Mlp { sizes: vec![n, n] }, ParamVector::new(data)?)
    }

    /// Lookup table with every entry set to `init`.
    pub fn tabular(cells: Discretizer, out_dim: usize, init: f64) -> Result<Self> {
        let arch = Arch::Tabular { cells, out_dim };
        let n = arch.n_params();
        Self::new(arch, ParamVector::new(vec![init; n])?)
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.arch.output_dim()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward_tape(x).map(|(y, _)| y)
    }

    pub fn forward_tape(&self, x: &[f64]) -> Result<(Vec<f64>, Tape)> {
        self.check_input(x)?;
        let p = self.params.as_slice();
        match &self.arch {
            Arch::Mlp { sizes } => {
                let mut acts = vec![x.to_vec()];
                let mut off = 0;
                let last = sizes.len() - 2;
                let mut out = Vec::new();
                for (l, w) in sizes.windows(2).enumerate() {
                    let (n_in, n_out) = (w[0], w[1]);
                    let input = acts.last().unwrap();
                    let weights = &p[off..off + n_in * n_out];
                    let bias = &p[off + n_in * n_out..off + n_in * n_out + n_out];
                    let mut z: Vec<f64> = (0..n_out)
                        .map(|o| {
                            let row = &weights[o * n_in..(o + 1) * n_in];
                            row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>() + bias[o]
                        })
                        .collect();
                    off += n_in * n_out + n_out;
                    if l == last {
                        out = z;
                    } else {
                        z.iter_mut().for_each(|v| *v = v.tanh());
                        acts.push(z);
                    }
                }
                Ok((
                    out,
                    Tape {
                        version: self.params.version,
                        acts,
                        cell: 0,
                    },
                ))
            }
            Arch::Tabular { cells, out_dim } => {
                let cell = cells.cell(x)?;
                Ok((
                    p[cell * out_dim..(cell + 1) * out_dim].to_vec(),
                    Tape {
                        version: self.params.version,
                        acts: Vec::new(),
                        cell,
                    },
                ))
            }
        }
    }

    /// Adds `∂(grad_out · y)/∂θ` for the recorded pass into `acc`.
    pub fn backward_into(&self, tape: &Tape, grad_out: &[f64], acc: &mut [f64]) -> Result<()> {
        if tape.version != self.params.version {
            return Err(Error::StaleTape {
                tape: tape.version,
                current: self.params.version,
            });
        }
        if grad_out.len() != self.output_dim() {
            return Err(Error::Dimension {
                expected: self.output_dim(),
                got: grad_out.len(),
            });
        }
        if acc.len() != self.n_params() {
            return Err(Error::Dimension {
                expected: self.n_params(),
                got: acc.len(),
            });
        }
        let p = self.params.as_slice();
        match &self.arch {
            Arch::Mlp { sizes } => {
                let offsets: Vec<usize> = sizes
                    .windows(2)
                    .scan(0, |off, w| {
                        let here = *off;
                        *off += w[0] * w[1] + w[1];
                        Some(here)
                    })
                    .collect();
                let mut delta = grad_out.to_vec();
                for l in (0..sizes.len() - 1).rev() {
                    let (n_in, n_out) = (sizes[l], sizes[l + 1]);
                    let off = offsets[l];
                    let input = &tape.acts[l];
                    for o in 0..n_out {
                        let d = delta[o];
                        if d != 0.0 {
                            let row = &mut acc[off + o * n_in..off + (o + 1) * n_in];
                            row.iter_mut().zip(input).for_each(|(g, x)| *g += d * x);
                        }
                        acc[off + n_in * n_out + o] += d;
                    }
                    if l > 0 {
                        let weights = &p[off..off + n_in * n_out];
                        delta = (0..n_in)
                            .map(|i| {
                                let back: f64 = (0..n_out).map(|o| weights[o * n_in + i] * delta[o]).sum();
                                back * (1.0 - input[i] * input[i])
                            })
                            .collect();
                    }
                }
            }
            Arch::Tabular { out_dim, .. } => {
                let base = tape.cell * out_dim;
                for (g, d) in acc[base..base + out_dim].iter_mut().zip(grad_out) {
                    *g += d;
                }
            }
        }
        Ok(())
    }

    pub fn backward(&self, tape: &Tape, grad_out: &[f64]) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; self.n_params()];
        self.backward_into(tape, grad_out, &mut acc)?;
        Ok(acc)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Checkpoint {
            arch: self.arch.clone(),
            version: self.params.version,
            n_params: self.params.len(),
            params: self.params.data.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.n_params != ck.params.len() {
            return Err(Error::validation("checkpoint parameter count does not match its header"));
        }
        let mut params = ParamVector::new(ck.params)?;
        params.version = ck.version;
        Self::new(ck.arch, params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

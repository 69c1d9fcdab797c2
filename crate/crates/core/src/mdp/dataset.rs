use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One `(s, a, r, s', done)` record. `index` is the position in its dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
    pub index: usize,
}

/// Provenance recorded in the header line of a dataset file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub state_dim: usize,
    pub action_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Reward bound asserted at construction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub policy_ids: Vec<String>,
}

/// An immutable offline dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    transitions: Vec<Transition>,
    meta: DatasetMeta,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    s: Vec<f64>,
    a: Vec<f64>,
    r: f64,
    s2: Vec<f64>,
    done: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    meta: DatasetMeta,
}

impl Dataset {
    /// Builds a dataset, re-indexing transitions densely from zero.
    pub fn new(mut transitions: Vec<Transition>, meta: DatasetMeta) -> Result<Self> {
        if transitions.is_empty() {
            return Err(Error::validation("dataset must contain at least one transition"));
        }
        for (i, t) in transitions.iter_mut().enumerate() {
            if t.state.len() != meta.state_dim || t.next_state.len() != meta.state_dim {
                return Err(Error::validation(format!(
                    "transition {i}: state dimension {} / {} does not match {}",
                    t.state.len(),
                    t.next_state.len(),
                    meta.state_dim
                )));
            }
            if t.action.len() != meta.action_dim {
                return Err(Error::validation(format!(
                    "transition {i}: action dimension {} does not match {}",
                    t.action.len(),
                    meta.action_dim
                )));
            }
            let finite = t.reward.is_finite()
                && t.state.iter().chain(&t.action).chain(&t.next_state).all(|x| x.is_finite());
            if !finite {
                return Err(Error::validation(format!("transition {i}: non-finite entry")));
            }
            if let Some(r_max) = meta.r_max {
                if t.reward > r_max {
                    return Err(Error::validation(format!(
                        "transition {i}: reward {} exceeds r_max {r_max}",
                        t.reward
                    )));
                }
            }
            t.index = i;
        }
        Ok(Self { transitions, meta })
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Transition> {
        self.transitions.get(index)
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn state_dim(&self) -> usize {
        self.meta.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.meta.action_dim
    }

    /// Writes the JSON Lines form: a metadata header followed by one transition per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer(&mut out, &Header { meta: self.meta.clone() })?;
        out.write_all(b"\n")?;
        for t in &self.transitions {
            let line = Line {
                s: t.state.clone(),
                a: t.action.clone(),
                r: t.reward,
                s2: t.next_state.clone(),
                done: t.terminal,
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut out = std::io::BufWriter::new(file);
        self.write_jsonl(&mut out)?;
        out.flush()?;
        Ok(())
    }

    /// Reads the JSON Lines form. A header line is optional; without one the
    /// dimensions are taken from the first transition.
    pub fn read_jsonl<R: BufRead>(input: R, path: &Path) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut meta: Option<DatasetMeta> = None;
        let mut transitions = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let lineno = i + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if transitions.is_empty() && meta.is_none() && line.contains("\"meta\"") {
                let header: Header =
                    serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
                meta = Some(header.meta);
                continue;
            }
            let rec: Line =
                serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
            let m = meta.get_or_insert_with(|| DatasetMeta {
                state_dim: rec.s.len(),
                action_dim: rec.a.len(),
                ..Default::default()
            });
            if rec.s.len() != m.state_dim || rec.s2.len() != m.state_dim {
                return Err(parse_err(
                    lineno,
                    format!("state dimension drift: expected {}", m.state_dim),
                ));
            }
            if rec.a.len() != m.action_dim {
                return Err(parse_err(
                    lineno,
                    format!("action dimension drift: expected {}", m.action_dim),
                ));
            }
            if let Some(r_max) = m.r_max {
                if rec.r > r_max {
                    return Err(parse_err(lineno, format!("reward {} exceeds r_max {r_max}", rec.r)));
                }
            }
            transitions.push(Transition {
                state: rec.s,
                action: rec.a,
                reward: rec.r,
                next_state: rec.s2,
                terminal: rec.done,
                index: transitions.len(),
            });
        }
        let meta = meta.ok_or_else(|| parse_err(0, "empty dataset file".to_string()))?;
        if transitions.is_empty() {
            return Err(parse_err(0, "dataset file has no transitions".to_string()));
        }
        Dataset::new(transitions, meta)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_jsonl(std::io::BufReader::new(file), path)
    }
}

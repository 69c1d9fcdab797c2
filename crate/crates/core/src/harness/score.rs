use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Returns of the random and expert reference policies for one task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreEntry {
    pub j_random: f64,
    pub j_expert: f64,
}

impl ScoreEntry {
    pub fn new(j_random: f64, j_expert: f64) -> Result<Self> {
        let e = Self { j_random, j_expert };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.j_expert > self.j_random) {
            return Err(Error::config(format!(
                "expert return {} must exceed random return {}",
                self.j_expert, self.j_random
            )));
        }
        Ok(())
    }
}

/// `100·(J − J_r)/(J_e − J_r)`, unclipped.
pub fn normalized_score(j: f64, entry: &ScoreEntry) -> Result<f64> {
    entry.validate()?;
    Ok((j - entry.j_random) / (entry.j_expert - entry.j_random) * 100.0)
}

/// Per-task reference returns, keyed by lower-case task family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    entries: BTreeMap<String, ScoreEntry>,
}

impl ScoreTable {
    /// D4RL locomotion references.
    pub fn d4rl() -> Self {
        let entries = [
            ("hopper", ScoreEntry { j_random: -20.27, j_expert: 3234.3 }),
            ("walker2d", ScoreEntry { j_random: 1.63, j_expert: 4592.3 }),
            ("halfcheetah", ScoreEntry { j_random: -280.18, j_expert: 12135.0 }),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self { entries }
    }

    pub fn insert(&mut self, task: &str, entry: ScoreEntry) -> Result<()> {
        entry.validate()?;
        self.entries.insert(task.to_lowercase(), entry);
        Ok(())
    }

    /// Looks up `task` or the family prefix before the first `-` (`hopper-medium-v2` → `hopper`).
    pub fn get(&self, task: &str) -> Option<ScoreEntry> {
        let key = task.to_lowercase();
        self.entries
            .get(&key)
            .or_else(|| key.split('-').next().and_then(|f| self.entries.get(f)))
            .copied()
    }
}

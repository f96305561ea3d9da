//! Recorded outputs keyed by (tool, structure, task, conditions hash).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ToolError;
use crate::inputgen::InputDeck;
use crate::planner::Tool;
use crate::units::Measurement;

/// Deck keys that distinguish replay entries for the same structure/task.
pub const CONDITION_KEYS: [&str; 5] = ["guest", "pressure", "probe_radius", "target", "temperature"];

/// `k=v;k=v` over [`CONDITION_KEYS`] present in the deck, sorted by key.
pub fn conditions_string(deck: &InputDeck) -> String {
    CONDITION_KEYS
        .iter()
        .filter_map(|k| deck.get(k).map(|v| format!("{k}={v}")))
        .collect::<Vec<_>>()
        .join(";")
}

pub fn conditions_hash(conditions: &str) -> String {
    let digest = Sha256::digest(conditions.as_bytes());
    digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ReplayKey {
    pub tool: Tool,
    pub structure: String,
    pub task: String,
    pub conditions_hash: String,
}

impl ReplayKey {
    pub fn for_deck(deck: &InputDeck) -> ReplayKey {
        ReplayKey {
            tool: deck.tool,
            structure: deck.get("structure").unwrap_or("").to_string(),
            task: deck.task().to_string(),
            conditions_hash: conditions_hash(&conditions_string(deck)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayOutput {
    pub metric: String,
    pub value: Measurement,
    pub source: String,
}

#[derive(Debug, Clone, Default)]
pub struct ReplayStore {
    entries: BTreeMap<ReplayKey, Vec<ReplayOutput>>,
}

impl ReplayStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(path: &Path) -> Result<Self, ToolError> {
        let text = std::fs::read_to_string(path).map_err(|e| ToolError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Columns: tool, structure, task, conditions_hash, metric, value,
    /// unit, source. First line is the header.
    pub fn parse(text: &str) -> Result<Self, ToolError> {
        let mut store = ReplayStore::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 || line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: String| ToolError::Fixture(format!("replay line {}: {msg}", i + 1));
            let c: Vec<&str> = line.split('\t').collect();
            if c.len() != 8 {
                return Err(bad(format!("expected 8 columns, got {}", c.len())));
            }
            let tool: Tool = serde_json::from_value(serde_json::Value::String(c[0].into()))
                .map_err(|_| bad(format!("unknown tool `{}`", c[0])))?;
            let value: f64 = c[5].parse().map_err(|_| bad(format!("bad value `{}`", c[5])))?;
            let key =
                ReplayKey { tool, structure: c[1].into(), task: c[2].into(), conditions_hash: c[3].into() };
            let out = ReplayOutput { metric: c[4].into(), value: Measurement::new(value, c[6]), source: c[7].into() };
            let slot = store.entries.entry(key).or_default();
            if slot.iter().any(|o| o.metric == out.metric) {
                return Err(bad(format!("duplicate metric `{}`", out.metric)));
            }
            slot.push(out);
        }
        Ok(store)
    }

    pub fn insert(&mut self, key: ReplayKey, out: ReplayOutput) {
        self.entries.entry(key).or_default().push(out);
    }

    /// Exact match only.
    pub fn lookup(&self, key: &ReplayKey) -> Result<&[ReplayOutput], ToolError> {
        self.entries.get(key).map(Vec::as_slice).ok_or_else(|| ToolError::FixtureMiss(key.clone()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ReplayKey, &Vec<ReplayOutput>)> {
        self.entries.iter()
    }
}

//! Builds tool input decks from jobs and renders them byte-stably.

pub mod grammar;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::intent::{ReferenceSettings, SettingValue};
use crate::planner::{Job, ParamSource, Tool};
use crate::retrieval::RetrievalHit;
use crate::structdb::StructDb;
use crate::units::format_number;

/// Keys that retrieved evidence may set.
pub const EVIDENCE_KEYS: [&str; 2] = ["cutoff", "forcefield"];

pub const ELECTROSTATIC_PAIR_STYLE: &str = "lj/cut/coul/long";
pub const LONG_RANGE_SOLVER: &str = "pppm 1.0e-4";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InputGenError {
    #[error("{tool} deck is missing mandatory keys: {}", .missing.join(", "))]
    SchemaViolation { tool: Tool, missing: Vec<String> },
    #[error("no deck grammar for tool `{0}`")]
    UnknownTool(Tool),
    #[error("key `{key}` is not part of the {tool} grammar")]
    UnknownKey { tool: Tool, key: String },
    #[error("structure `{0}` is not in the structure database")]
    UnknownStructure(String),
    #[error("no force field for species `{0}`")]
    UnknownSpecies(String),
    #[error("deck parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Where a deck value came from. Declared in ascending precedence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Default,
    RetrievedEvidence,
    Intent,
    ReferenceSettings,
    Correction,
    /// Output of an upstream job (e.g. the selected configuration index).
    /// Never competes with the other sources.
    Upstream,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Default => "default",
            Provenance::RetrievedEvidence => "retrieved_evidence",
            Provenance::Intent => "intent",
            Provenance::ReferenceSettings => "reference_settings",
            Provenance::Correction => "correction",
            Provenance::Upstream => "upstream",
        })
    }
}

impl From<ParamSource> for Provenance {
    fn from(s: ParamSource) -> Self {
        match s {
            ParamSource::Intent => Provenance::Intent,
            ParamSource::ReferenceSettings => Provenance::ReferenceSettings,
            ParamSource::Default | ParamSource::Template => Provenance::Default,
            ParamSource::Upstream => Provenance::Upstream,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeckEntry {
    pub key: String,
    pub value: String,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDeck {
    pub job_id: String,
    pub tool: Tool,
    /// Entries in grammar order.
    pub entries: Vec<DeckEntry>,
    pub structure_refs: Vec<String>,
    pub forcefield_refs: Vec<String>,
    /// Chunk ids of retrieval hits that set a value.
    #[serde(default)]
    pub evidence: Vec<String>,
}

impl InputDeck {
    pub fn new(job_id: &str, tool: Tool) -> Self {
        InputDeck {
            job_id: job_id.to_string(),
            tool,
            entries: Vec::new(),
            structure_refs: Vec::new(),
            forcefield_refs: Vec::new(),
            evidence: Vec::new(),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|e| e.key == key).map(|e| e.value.as_str())
    }

    pub fn provenance_of(&self, key: &str) -> Option<Provenance> {
        self.entries.iter().find(|e| e.key == key).map(|e| e.provenance)
    }

    pub fn provenance(&self) -> BTreeMap<String, Provenance> {
        self.entries.iter().map(|e| (e.key.clone(), e.provenance)).collect()
    }

    pub fn task(&self) -> &str {
        self.get("task").unwrap_or("")
    }

    /// Sets `key`, keeping grammar order. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str, provenance: Provenance) -> Result<(), InputGenError> {
        let pos = grammar::position(self.tool, key)
            .ok_or_else(|| InputGenError::UnknownKey { tool: self.tool, key: key.to_string() })?;
        let entry = DeckEntry { key: key.to_string(), value: value.to_string(), provenance };
        if let Some(e) = self.entries.iter_mut().find(|e| e.key == key) {
            *e = entry;
            return Ok(());
        }
        let at = self
            .entries
            .iter()
            .position(|e| grammar::position(self.tool, &e.key).is_some_and(|p| p > pos))
            .unwrap_or(self.entries.len());
        self.entries.insert(at, entry);
        Ok(())
    }

    pub fn remove(&mut self, key: &str) -> Option<DeckEntry> {
        let i = self.entries.iter().position(|e| e.key == key)?;
        Some(self.entries.remove(i))
    }

    pub fn pairs(&self) -> Vec<(String, String)> {
        self.entries.iter().map(|e| (e.key.clone(), e.value.clone())).collect()
    }

    pub fn check_schema(&self) -> Result<(), InputGenError> {
        grammar::keys(self.tool).ok_or(InputGenError::UnknownTool(self.tool))?;
        let missing: Vec<String> = grammar::mandatory(self.tool, self.task(), self.get("target"))
            .into_iter()
            .filter(|k| self.get(k).is_none_or(|v| v.trim().is_empty()))
            .map(str::to_string)
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(InputGenError::SchemaViolation { tool: self.tool, missing })
        }
    }
}

pub fn value_text(v: &SettingValue) -> String {
    v.deck_value()
}

struct Candidates(BTreeMap<String, (String, Provenance)>);

impl Candidates {
    fn offer(&mut self, key: &str, value: String, p: Provenance) -> bool {
        match self.0.get(key) {
            Some((_, cur)) if *cur >= p => false,
            _ => {
                self.0.insert(key.to_string(), (value, p));
                true
            }
        }
    }
}

static EVIDENCE_CUTOFF: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)cut-?off(?:\s+(?:radius|distance))?(?:\s+of|\s*=|\s*:)?\s*(\d+(?:\.\d+)?)\s*(?:Å|A\b|angstrom)").unwrap());
static EVIDENCE_FF: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(TraPPE|UFF|DREIDING)\b").unwrap());

/// Whitelisted settings mentioned in a retrieval hit.
pub fn evidence_settings(hit: &RetrievalHit) -> Vec<(&'static str, String)> {
    let mut out = Vec::new();
    if let Some(c) = EVIDENCE_CUTOFF.captures(&hit.text) {
        if let Ok(v) = c[1].parse::<f64>() {
            out.push(("cutoff", format_number(v)));
        }
    }
    if let Some(c) = EVIDENCE_FF.captures(&hit.text) {
        out.push(("forcefield", c[1].to_string()));
    }
    out
}

/// Builds the deck for `job`. Precedence per key: correction >
/// reference settings > intent > retrieved evidence > default.
pub fn generate_deck(
    job: &Job,
    db: &StructDb,
    refs: Option<&ReferenceSettings>,
    evidence: &[RetrievalHit],
) -> Result<InputDeck, InputGenError> {
    let tool = job.tool;
    grammar::keys(tool).ok_or(InputGenError::UnknownTool(tool))?;
    for m in &job.materials {
        if db.structure(m).is_none() {
            return Err(InputGenError::UnknownStructure(m.clone()));
        }
    }
    let in_grammar = |k: &str| grammar::position(tool, k).is_some();
    let mut c = Candidates(BTreeMap::new());

    let needs_ff = matches!(tool, Tool::Gcmc | Tool::Md | Tool::Mlip);
    let mut electrostatics = false;
    let mut ff_family = None;
    if needs_ff {
        for g in &job.guests {
            let params = db.lookup_forcefield(g).map_err(|_| InputGenError::UnknownSpecies(g.clone()))?;
            electrostatics |= params.requires_electrostatics();
            if ff_family.is_none() {
                ff_family = params.sites.first().map(|s| s.source.clone());
            }
        }
    }

    // system-consistent defaults
    match tool {
        Tool::Gcmc => {
            c.offer("charge_method", if electrostatics { "Ewald" } else { "None" }.into(), Provenance::Default);
        }
        Tool::Md => {
            if electrostatics {
                c.offer("pair_style", ELECTROSTATIC_PAIR_STYLE.into(), Provenance::Default);
                c.offer("kspace_style", LONG_RANGE_SOLVER.into(), Provenance::Default);
            } else {
                c.offer("pair_style", "lj/cut".into(), Provenance::Default);
            }
        }
        Tool::Dft => {
            c.offer("nelm", "60".into(), Provenance::Default);
            if job.task == "charge_density" {
                c.offer("lcharg", ".TRUE.".into(), Provenance::Default);
            }
        }
        Tool::Mlip => {
            c.offer("potential", "lj-surrogate".into(), Provenance::Default);
        }
        _ => {}
    }
    if let Some(f) = ff_family {
        if in_grammar("forcefield") {
            c.offer("forcefield", f, Provenance::Default);
        }
    }

    let mut evidence_by_key: BTreeMap<&str, String> = BTreeMap::new();
    for hit in evidence {
        for (k, v) in evidence_settings(hit) {
            if in_grammar(k) && c.offer(k, v, Provenance::RetrievedEvidence) {
                evidence_by_key.insert(k, hit.chunk_id.clone());
            }
        }
    }

    c.offer("task", job.task.clone(), Provenance::Intent);
    if let Some(m) = job.material() {
        if in_grammar("structure") {
            c.offer("structure", m.to_string(), Provenance::Intent);
        }
    }
    if !job.guests.is_empty() && in_grammar("guest") {
        c.offer("guest", job.guests.join(","), Provenance::Intent);
    }

    for (k, p) in &job.spec {
        if !in_grammar(k) {
            return Err(InputGenError::UnknownKey { tool, key: k.clone() });
        }
        c.offer(k, value_text(&p.value), p.source.into());
    }

    if let Some(refs) = refs {
        for (k, v) in &refs.entries {
            if in_grammar(k) {
                c.offer(k, value_text(v), Provenance::ReferenceSettings);
            }
        }
    }

    // a solver default is meaningless once the pair style has no Coulomb term
    let coulombic = c.0.get("pair_style").is_some_and(|(v, _)| v.contains("coul"));
    if !coulombic && c.0.get("kspace_style").is_some_and(|(_, p)| *p == Provenance::Default) {
        c.0.remove("kspace_style");
    }

    let mut deck = InputDeck::new(&job.job_id, tool);
    for (k, (v, p)) in c.0 {
        deck.set(&k, &v, p)?;
    }
    deck.structure_refs = job.materials.clone();
    deck.forcefield_refs = if needs_ff { job.guests.clone() } else { Vec::new() };
    // only evidence whose value survived precedence is cited
    for e in deck.entries.iter().filter(|e| e.provenance == Provenance::RetrievedEvidence) {
        if let Some(id) = evidence_by_key.get(e.key.as_str()) {
            if !deck.evidence.contains(id) {
                deck.evidence.push(id.clone());
            }
        }
    }
    deck.check_schema()?;
    Ok(deck)
}

/// Renders a deck. Geometry decks are a single command line; every other
/// tool is a `Keyword value` file in grammar order.
pub fn render_deck(deck: &InputDeck) -> String {
    render_pairs(deck.tool, &deck.pairs())
}

pub fn render_pairs(tool: Tool, pairs: &[(String, String)]) -> String {
    let get = |k: &str| pairs.iter().find(|(x, _)| x == k).map(|(_, v)| v.as_str());
    if tool == Tool::Geometry {
        let task = get("task").unwrap_or("");
        let s = get("structure").unwrap_or("");
        let Some((flag, ext)) = grammar::geometry_mode(task) else {
            return format!("network -ha {s}.cif\n");
        };
        return if task == "pore_diameter" {
            format!("network -ha {flag} {s}.{ext} {s}.cif\n")
        } else {
            let r = get("probe_radius").unwrap_or("");
            let n = get("samples").unwrap_or("");
            format!("network -ha {flag} {r} {r} {n} {s}.{ext} {s}.cif\n")
        };
    }
    let mut sorted: Vec<&(String, String)> = pairs.iter().collect();
    sorted.sort_by_key(|(k, _)| grammar::position(tool, k).unwrap_or(usize::MAX));
    let mut out = String::new();
    for (k, v) in sorted {
        if v.is_empty() {
            continue;
        }
        let w = grammar::keyword(tool, k).unwrap_or(k);
        out.push_str(w);
        out.push(' ');
        out.push_str(v);
        out.push('\n');
    }
    out
}

/// Parses rendered deck text back into canonical (key, value) pairs.
pub fn parse_deck(tool: Tool, text: &str) -> Result<Vec<(String, String)>, InputGenError> {
    let err = |line: usize, msg: &str| InputGenError::Parse { line, msg: msg.to_string() };
    grammar::keys(tool).ok_or(InputGenError::UnknownTool(tool))?;
    if tool == Tool::Geometry {
        let line = text.lines().next().ok_or_else(|| err(1, "empty deck"))?;
        let argv: Vec<&str> = line.split_whitespace().collect();
        if argv.len() < 3 || argv[0] != "network" || argv[1] != "-ha" {
            return Err(err(1, "expected `network -ha ...`"));
        }
        let task = grammar::geometry_task(argv[2]).ok_or_else(|| err(1, "unknown mode flag"))?;
        let cif = argv.last().unwrap();
        let structure = cif.strip_suffix(".cif").ok_or_else(|| err(1, "last argument must be a .cif file"))?;
        let mut pairs = vec![("task".to_string(), task.to_string()), ("structure".to_string(), structure.to_string())];
        match (task, argv.len()) {
            ("pore_diameter", 5) => {}
            (_, 8) if task != "pore_diameter" => {
                if argv[3] != argv[4] {
                    return Err(err(1, "channel and probe radius differ"));
                }
                pairs.push(("probe_radius".into(), argv[3].into()));
                pairs.push(("samples".into(), argv[5].into()));
            }
            _ => return Err(err(1, "wrong argument count")),
        }
        return Ok(pairs);
    }
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (w, v) = line.split_once(' ').ok_or_else(|| err(i + 1, "expected `Keyword value`"))?;
        let k = grammar::canonical(tool, w).ok_or_else(|| err(i + 1, &format!("unknown keyword `{w}`")))?;
        pairs.push((k.to_string(), v.to_string()));
    }
    Ok(pairs)
}

//! Hierarchical filter funnel over descriptor tables.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::retrieval::RetrievalHit;
use crate::structdb::{consistency_check, StructureRecord};

const PROBES: &str = include_str!("../../data/probes.tsv");

pub const DFT_MAX_ATOMS: usize = 300;
pub const MD_MAX_ATOMS: usize = 3000;
pub const GCMC_MAX_ATOMS: usize = 5000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScreeningError {
    #[error("objective `{0}` has no registered low-cost descriptor")]
    NoSurrogate(String),
    #[error("no probe diameter for guest `{0}`")]
    UnknownProbe(String),
    #[error("row `{row}` lacks descriptor `{field}`")]
    MissingDescriptor { row: String, field: String },
    #[error("unknown downstream workflow `{0}`")]
    UnknownDownstream(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid funnel: {0}")]
    InvalidConfig(String),
}

/// Kinetic diameter in Å for a guest, from the shipped probe table.
pub fn probe_diameter(guest: &str) -> Option<f64> {
    PROBES
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| l.split('\t').collect::<Vec<_>>())
        .find(|c| c[0].eq_ignore_ascii_case(guest))
        .and_then(|c| c[1].parse().ok())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Downstream {
    Gcmc,
    Dft,
    Md,
}

impl Downstream {
    pub fn parse(s: &str) -> Result<Downstream, ScreeningError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gcmc" => Ok(Downstream::Gcmc),
            "dft" => Ok(Downstream::Dft),
            "md" => Ok(Downstream::Md),
            _ => Err(ScreeningError::UnknownDownstream(s.to_string())),
        }
    }

    pub fn max_atoms(self) -> usize {
        match self {
            Downstream::Gcmc => GCMC_MAX_ATOMS,
            Downstream::Dft => DFT_MAX_ATOMS,
            Downstream::Md => MD_MAX_ATOMS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FilterStage {
    Validity,
    AtomCount { max_atoms: usize },
    Accessibility { guest: String, probe_diameter: f64 },
    DescriptorRank { descriptor: String, top_n: usize },
}

impl FilterStage {
    pub fn stage_id(&self) -> String {
        match self {
            FilterStage::Validity => "validity".into(),
            FilterStage::AtomCount { .. } => "atom_count".into(),
            FilterStage::Accessibility { .. } => "accessibility".into(),
            FilterStage::DescriptorRank { descriptor, .. } => {
                format!("{}_rank", descriptor.split('_').next().unwrap_or(descriptor))
            }
        }
    }

    /// Row predicate for the non-rank stages.
    pub fn admits(&self, row: &DescriptorRow) -> Result<bool, ScreeningError> {
        let missing = |field: &str| ScreeningError::MissingDescriptor { row: row.structure_id.clone(), field: field.into() };
        Ok(match self {
            FilterStage::Validity => row.valid,
            FilterStage::AtomCount { max_atoms } => row.atom_count.ok_or_else(|| missing("atom_count"))? <= *max_atoms,
            FilterStage::Accessibility { probe_diameter, .. } => row.pld.ok_or_else(|| missing("pld"))? >= *probe_diameter,
            FilterStage::DescriptorRank { .. } => true,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningConfig {
    pub objective: String,
    pub downstream: Downstream,
    pub stages: Vec<FilterStage>,
    /// Chunk ids of retrieval hits that changed a parameter.
    #[serde(default)]
    pub evidence: Vec<String>,
}

impl ScreeningConfig {
    pub fn check(&self) -> Result<(), ScreeningError> {
        let ranks: Vec<usize> = self
            .stages
            .iter()
            .enumerate()
            .filter(|(_, s)| matches!(s, FilterStage::DescriptorRank { .. }))
            .map(|(i, _)| i)
            .collect();
        if ranks.len() > 1 || ranks.first().is_some_and(|&i| i + 1 != self.stages.len()) {
            return Err(ScreeningError::InvalidConfig("descriptor_rank must be the single final stage".into()));
        }
        if self.downstream == Downstream::Dft
            && !self.stages.iter().any(|s| matches!(s, FilterStage::AtomCount { max_atoms } if *max_atoms <= DFT_MAX_ATOMS))
        {
            return Err(ScreeningError::InvalidConfig(format!("dft downstream needs an atom_count stage <= {DFT_MAX_ATOMS}")));
        }
        Ok(())
    }

    pub fn top_n(&self) -> Option<usize> {
        self.stages.iter().find_map(|s| match s {
            FilterStage::DescriptorRank { top_n, .. } => Some(*top_n),
            _ => None,
        })
    }
}

/// `<guest>-<property>` objectives; every property ranks on the guest's
/// Henry coefficient.
pub fn surrogate_descriptor(objective: &str) -> Result<(String, String), ScreeningError> {
    let none = || ScreeningError::NoSurrogate(objective.to_string());
    let (guest, prop) = objective.split_once('-').ok_or_else(none)?;
    if !matches!(prop, "uptake" | "henry" | "binding") {
        return Err(none());
    }
    let guest = crate::intent::GUEST_SPECIES
        .iter()
        .map(|(g, _)| *g)
        .find(|g| g.eq_ignore_ascii_case(guest))
        .ok_or_else(none)?;
    Ok((guest.to_string(), format!("henry_{guest}")))
}

static ATOM_LIMIT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)(?:≤|<=|at most|no more than|fewer than|up to)\s*(\d[\d,]*)\s*atoms").unwrap());

/// Cheapest-first stage list for an objective and downstream workflow.
/// Evidence may only tighten the atom limit.
pub fn configure_funnel(
    objective: &str,
    downstream: Downstream,
    top_n: usize,
    evidence: &[RetrievalHit],
) -> Result<ScreeningConfig, ScreeningError> {
    let (guest, descriptor) = surrogate_descriptor(objective)?;
    let probe = probe_diameter(&guest).ok_or_else(|| ScreeningError::UnknownProbe(guest.clone()))?;
    let mut max_atoms = downstream.max_atoms();
    let mut used = Vec::new();
    for hit in evidence {
        if let Some(c) = ATOM_LIMIT.captures(&hit.text) {
            if let Ok(n) = c[1].replace(',', "").parse::<usize>() {
                if n < max_atoms {
                    max_atoms = n;
                    used.push(hit.chunk_id.clone());
                }
            }
        }
    }
    let config = ScreeningConfig {
        objective: objective.to_string(),
        downstream,
        stages: vec![
            FilterStage::Validity,
            FilterStage::AtomCount { max_atoms },
            FilterStage::Accessibility { guest, probe_diameter: probe },
            FilterStage::DescriptorRank { descriptor, top_n },
        ],
        evidence: used,
    };
    config.check()?;
    Ok(config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorRow {
    pub structure_id: String,
    pub valid: bool,
    pub atom_count: Option<usize>,
    pub pld: Option<f64>,
    pub lcd: Option<f64>,
    pub values: BTreeMap<String, f64>,
}

impl DescriptorRow {
    pub fn get(&self, key: &str) -> Option<f64> {
        match key {
            "pld" => self.pld,
            "lcd" => self.lcd,
            "atom_count" => self.atom_count.map(|n| n as f64),
            _ => self.values.get(key).copied(),
        }
    }

    /// Live-database row: validity is the record flag and, when atoms are
    /// present, a clean consistency check.
    pub fn from_record(rec: &StructureRecord) -> DescriptorRow {
        let valid = rec.valid && (rec.atoms.is_empty() || consistency_check(rec).is_empty());
        let d = &rec.descriptors;
        let values = d.values.iter().filter(|(k, _)| !matches!(k.as_str(), "pld" | "lcd")).map(|(k, v)| (k.clone(), *v)).collect();
        DescriptorRow {
            structure_id: rec.structure_id.clone(),
            valid,
            atom_count: Some(rec.atom_count),
            pld: d.pld(),
            lcd: d.lcd(),
            values,
        }
    }

    /// Descriptor-only structure record, so shortlist rows can be planned
    /// and simulated like any other structure.
    pub fn to_record(&self) -> StructureRecord {
        let mut values = self.values.clone();
        if let Some(p) = self.pld {
            values.insert("pld".into(), p);
        }
        if let Some(l) = self.lcd {
            values.insert("lcd".into(), l);
        }
        StructureRecord {
            structure_id: self.structure_id.clone(),
            names: vec![],
            formula: String::new(),
            atom_count: self.atom_count.unwrap_or(0),
            lattice: crate::structdb::Lattice::cubic(0.0),
            atoms: vec![],
            descriptors: crate::structdb::Descriptors { values, flags: BTreeMap::new() },
            valid: self.valid,
        }
    }
}

/// TSV with a header; required column `structure_id`, recognised columns
/// `valid`, `atom_count`, `pld`, `lcd`, every other column numeric. Empty
/// cells and `-` are missing values.
pub fn parse_descriptor_table(text: &str) -> Result<Vec<DescriptorRow>, ScreeningError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    let Some((_, header)) = lines.next() else {
        return Ok(Vec::new());
    };
    let cols: Vec<&str> = header.split('\t').map(str::trim).collect();
    if cols.first() != Some(&"structure_id") {
        return Err(ScreeningError::Parse { line: 1, msg: "first column must be structure_id".into() });
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let ln = i + 1;
        let cells: Vec<&str> = line.split('\t').map(str::trim).collect();
        if cells.len() != cols.len() {
            return Err(ScreeningError::Parse { line: ln, msg: format!("expected {} cells, got {}", cols.len(), cells.len()) });
        }
        let mut row = DescriptorRow {
            structure_id: cells[0].to_string(),
            valid: true,
            atom_count: None,
            pld: None,
            lcd: None,
            values: BTreeMap::new(),
        };
        for (c, v) in cols.iter().zip(&cells).skip(1) {
            if v.is_empty() || *v == "-" {
                if *c == "valid" {
                    row.valid = false;
                }
                continue;
            }
            let bad = || ScreeningError::Parse { line: ln, msg: format!("bad {c} `{v}`") };
            match *c {
                "valid" => {
                    row.valid = match *v {
                        "true" | "1" => true,
                        "false" | "0" => false,
                        _ => return Err(bad()),
                    }
                }
                "atom_count" => row.atom_count = Some(v.parse().map_err(|_| bad())?),
                "pld" => row.pld = Some(v.parse().map_err(|_| bad())?),
                "lcd" => row.lcd = Some(v.parse().map_err(|_| bad())?),
                _ => {
                    row.values.insert(c.to_string(), v.parse().map_err(|_| bad())?);
                }
            }
        }
        out.push(row);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCount {
    pub stage_id: String,
    pub input_count: usize,
    pub output_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunnelReport {
    pub objective: String,
    pub stages: Vec<StageCount>,
    /// Rows passing every non-rank stage, sorted by id.
    pub survivors: Vec<String>,
    pub shortlist: Vec<String>,
}

impl FunnelReport {
    /// Input count of the first stage followed by each stage's output.
    pub fn counts(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.stages.first().map(|s| vec![s.input_count]).unwrap_or_default();
        v.extend(self.stages.iter().map(|s| s.output_count));
        v
    }
}

fn rank<'a>(rows: &[&'a DescriptorRow], descriptor: &str) -> Result<Vec<&'a DescriptorRow>, ScreeningError> {
    let mut keyed = Vec::with_capacity(rows.len());
    for r in rows {
        let v = r
            .get(descriptor)
            .ok_or_else(|| ScreeningError::MissingDescriptor { row: r.structure_id.clone(), field: descriptor.into() })?;
        keyed.push((v, *r));
    }
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.structure_id.cmp(&b.1.structure_id)));
    Ok(keyed.into_iter().map(|(_, r)| r).collect())
}

pub fn run_funnel(rows: &[DescriptorRow], config: &ScreeningConfig) -> Result<FunnelReport, ScreeningError> {
    config.check()?;
    let mut current: Vec<&DescriptorRow> = rows.iter().collect();
    let mut stages = Vec::new();
    let mut shortlist = None;
    for stage in &config.stages {
        let input_count = current.len();
        match stage {
            FilterStage::DescriptorRank { descriptor, top_n } => {
                let ranked = rank(&current, descriptor)?;
                let top: Vec<String> = ranked.iter().take(*top_n).map(|r| r.structure_id.clone()).collect();
                stages.push(StageCount { stage_id: stage.stage_id(), input_count, output_count: top.len() });
                shortlist = Some(top);
            }
            _ => {
                let mut next = Vec::with_capacity(current.len());
                for r in current {
                    if stage.admits(r)? {
                        next.push(r);
                    }
                }
                current = next;
                stages.push(StageCount { stage_id: stage.stage_id(), input_count, output_count: current.len() });
            }
        }
    }
    let mut survivors: Vec<String> = current.iter().map(|r| r.structure_id.clone()).collect();
    survivors.sort();
    let shortlist = shortlist.unwrap_or_else(|| survivors.clone());
    Ok(FunnelReport { objective: config.objective.clone(), stages, survivors, shortlist })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub k: usize,
    pub funnel_top: Vec<String>,
    pub exhaustive_top: Vec<String>,
    pub overlap: usize,
    /// Exhaustive top-k entries the funnel lost.
    pub missed: Vec<String>,
}

fn top_k_by(rows: &[&DescriptorRow], k: usize, evaluator: &dyn Fn(&DescriptorRow) -> f64) -> Vec<String> {
    let mut scored: Vec<(f64, &str)> = rows.iter().map(|r| (evaluator(r), r.structure_id.as_str())).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    scored.into_iter().take(k).map(|(_, id)| id.to_string()).collect()
}

/// Top-k after funnel-then-evaluate against evaluating every valid row.
pub fn shortlist_vs_exhaustive(
    rows: &[DescriptorRow],
    config: &ScreeningConfig,
    evaluator: &dyn Fn(&DescriptorRow) -> f64,
    k: usize,
) -> Result<OverlapReport, ScreeningError> {
    let report = run_funnel(rows, config)?;
    let by_id: BTreeMap<&str, &DescriptorRow> = rows.iter().map(|r| (r.structure_id.as_str(), r)).collect();
    let short: Vec<&DescriptorRow> = report.shortlist.iter().filter_map(|id| by_id.get(id.as_str()).copied()).collect();
    let valid: Vec<&DescriptorRow> = rows.iter().filter(|r| r.valid).collect();
    let funnel_top = top_k_by(&short, k, evaluator);
    let exhaustive_top = top_k_by(&valid, k, evaluator);
    let missed: Vec<String> = exhaustive_top.iter().filter(|id| !funnel_top.contains(id)).cloned().collect();
    Ok(OverlapReport { k, overlap: exhaustive_top.len() - missed.len(), funnel_top, exhaustive_top, missed })
}

#[cfg(test)]
mod tests;

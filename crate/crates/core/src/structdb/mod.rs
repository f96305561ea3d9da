//! Fixture-backed structure database: material identifier resolution,
//! chemical consistency checks, guest molecules and force-field parameters.

mod check;
mod format;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use check::{consistency_check, consistency_check_with, min_image_distance, Violation, OVERLAP_TOLERANCE};
pub use format::{parse_molecule, parse_structure, write_molecule, write_structure};

#[derive(Debug, thiserror::Error)]
pub enum StructDbError {
    #[error("empty identifier")]
    EmptyIdentifier,
    #[error("no structure matches `{0}`")]
    NotFound(String),
    #[error("identifier `{raw}` is ambiguous: {candidates:?}")]
    Ambiguous { raw: String, candidates: Vec<String> },
    #[error("unknown species `{0}`")]
    UnknownSpecies(String),
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Lattice {
    pub fn cubic(a: f64) -> Self {
        Lattice { a, b: a, c: a, alpha: 90.0, beta: 90.0, gamma: 90.0 }
    }

    pub fn volume(&self) -> f64 {
        let (ca, cb, cg) = (
            self.alpha.to_radians().cos(),
            self.beta.to_radians().cos(),
            self.gamma.to_radians().cos(),
        );
        let s = 1.0 - ca * ca - cb * cb - cg * cg + 2.0 * ca * cb * cg;
        if s <= 0.0 || self.a <= 0.0 || self.b <= 0.0 || self.c <= 0.0 {
            return 0.0;
        }
        self.a * self.b * self.c * s.sqrt()
    }

    /// Row vectors of the cell in Cartesian Å (a along x, b in the xy plane).
    pub fn matrix(&self) -> [[f64; 3]; 3] {
        let (ca, cb, cg) = (
            self.alpha.to_radians().cos(),
            self.beta.to_radians().cos(),
            self.gamma.to_radians().cos(),
        );
        let sg = self.gamma.to_radians().sin();
        let cx = self.c * cb;
        let cy = self.c * (ca - cb * cg) / sg;
        let cz = (self.c * self.c - cx * cx - cy * cy).max(0.0).sqrt();
        [[self.a, 0.0, 0.0], [self.b * cg, self.b * sg, 0.0], [cx, cy, cz]]
    }

    pub fn to_cartesian(&self, frac: [f64; 3]) -> [f64; 3] {
        let m = self.matrix();
        let mut out = [0.0; 3];
        for (k, o) in out.iter_mut().enumerate() {
            *o = frac[0] * m[0][k] + frac[1] * m[1][k] + frac[2] * m[2][k];
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub element: String,
    pub frac: [f64; 3],
    pub charge: Option<f64>,
}

/// Named numeric descriptors plus boolean flags (e.g. `accessible_CH4`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Descriptors {
    pub values: BTreeMap<String, f64>,
    pub flags: BTreeMap<String, bool>,
}

impl Descriptors {
    pub fn get(&self, key: &str) -> Option<f64> {
        self.values.get(key).copied()
    }
    pub fn pld(&self) -> Option<f64> {
        self.get("pld")
    }
    pub fn lcd(&self) -> Option<f64> {
        self.get("lcd")
    }
    pub fn surface_area(&self) -> Option<f64> {
        self.get("surface_area")
    }
    pub fn henry(&self, gas: &str) -> Option<f64> {
        self.get(&format!("henry_{gas}"))
    }
    pub fn accessible(&self, probe: &str) -> Option<bool> {
        self.flags.get(&format!("accessible_{probe}")).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureRecord {
    pub structure_id: String,
    pub names: Vec<String>,
    pub formula: String,
    pub atom_count: usize,
    pub lattice: Lattice,
    pub atoms: Vec<Atom>,
    pub descriptors: Descriptors,
    pub valid: bool,
}

impl StructureRecord {
    pub fn display_name(&self) -> &str {
        self.names.first().map(String::as_str).unwrap_or(&self.structure_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoleculeRecord {
    pub name: String,
    pub synonyms: Vec<String>,
    pub net_charge: f64,
    pub atoms: Vec<(String, [f64; 3])>,
    pub charges: Vec<f64>,
}

impl MoleculeRecord {
    pub fn requires_electrostatics(&self) -> bool {
        self.charges.iter().any(|q| q.abs() > 1e-12)
    }
    pub fn charge_balance_ok(&self) -> bool {
        (self.charges.iter().sum::<f64>() - self.net_charge).abs() <= 1e-6
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceFieldEntry {
    pub species: String,
    pub site: String,
    pub element: String,
    pub lj_epsilon: f64,
    pub lj_sigma: f64,
    pub charge: f64,
    pub source: String,
}

/// All sites of one species.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesParams {
    pub species: String,
    pub sites: Vec<ForceFieldEntry>,
}

impl SpeciesParams {
    pub fn requires_electrostatics(&self) -> bool {
        self.sites.iter().any(|s| s.charge.abs() > 1e-12)
    }
}

/// How a raw identifier matched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchKind {
    StructureId,
    PrimaryName,
    Synonym,
    Formula,
    Pormake,
}

#[derive(Debug, Default, Clone)]
pub struct StructDb {
    structures: BTreeMap<String, StructureRecord>,
    molecules: BTreeMap<String, MoleculeRecord>,
    forcefield: BTreeMap<String, Vec<ForceFieldEntry>>,
    pormake: BTreeMap<String, String>,
}

/// Splits a `topology+node+linker` identifier, lowercased.
pub fn parse_pormake(raw: &str) -> Option<(String, String, String)> {
    let parts: Vec<&str> = raw.trim().split('+').map(str::trim).collect();
    match parts.as_slice() {
        [t, n, l] if !t.is_empty() && !n.is_empty() && !l.is_empty() && !t.contains(' ') => {
            Some((t.to_lowercase(), n.to_lowercase(), l.to_lowercase()))
        }
        _ => None,
    }
}

fn pormake_key(t: &(String, String, String)) -> String {
    format!("{}+{}+{}", t.0, t.1, t.2)
}

fn normalize_formula(f: &str) -> String {
    f.chars().filter(|c| !c.is_whitespace()).collect()
}

impl StructDb {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads `structures/*.rec`, `molecules/*.rec`, `forcefields/*.tsv` and
    /// the optional `structures/pormake.tsv` alias table under `root`.
    pub fn load(root: &Path) -> Result<Self, StructDbError> {
        let mut db = StructDb::new();
        for path in sorted_files(&root.join("structures"), "rec")? {
            let text = read(&path)?;
            let rec = parse_structure(&text).map_err(|(line, msg)| StructDbError::Parse {
                path: path.display().to_string(),
                line,
                msg,
            })?;
            db.insert_structure(rec);
        }
        for path in sorted_files(&root.join("molecules"), "rec")? {
            let text = read(&path)?;
            let mol = parse_molecule(&text).map_err(|(line, msg)| StructDbError::Parse {
                path: path.display().to_string(),
                line,
                msg,
            })?;
            db.insert_molecule(mol);
        }
        for path in sorted_files(&root.join("forcefields"), "tsv")? {
            let text = read(&path)?;
            for entry in parse_forcefield_tsv(&text).map_err(|(line, msg)| StructDbError::Parse {
                path: path.display().to_string(),
                line,
                msg,
            })? {
                db.insert_forcefield(entry);
            }
        }
        let alias_path = root.join("structures").join("pormake.tsv");
        if alias_path.exists() {
            let text = read(&alias_path)?;
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (alias, id) = line.split_once('\t').ok_or_else(|| StructDbError::Parse {
                    path: alias_path.display().to_string(),
                    line: i + 1,
                    msg: "expected `alias<TAB>structure_id`".into(),
                })?;
                db.insert_pormake_alias(alias, id.trim());
            }
        }
        Ok(db)
    }

    pub fn insert_structure(&mut self, rec: StructureRecord) {
        self.structures.insert(rec.structure_id.clone(), rec);
    }

    pub fn insert_molecule(&mut self, mol: MoleculeRecord) {
        self.molecules.insert(mol.name.clone(), mol);
    }

    pub fn insert_forcefield(&mut self, entry: ForceFieldEntry) {
        self.forcefield.entry(entry.species.clone()).or_default().push(entry);
    }

    pub fn insert_pormake_alias(&mut self, alias: &str, structure_id: &str) {
        if let Some(t) = parse_pormake(alias) {
            self.pormake.insert(pormake_key(&t), structure_id.to_string());
        }
    }

    pub fn structures(&self) -> impl Iterator<Item = &StructureRecord> {
        self.structures.values()
    }

    pub fn structure(&self, id: &str) -> Option<&StructureRecord> {
        self.structures.get(id)
    }

    pub fn molecules(&self) -> impl Iterator<Item = &MoleculeRecord> {
        self.molecules.values()
    }

    /// Exact id, then case-insensitive name, then formula, then PORMAKE alias.
    pub fn resolve_identifier(&self, raw: &str) -> Result<&StructureRecord, StructDbError> {
        self.resolve_with_kind(raw).map(|(rec, _)| rec)
    }

    pub fn resolve_with_kind(&self, raw: &str) -> Result<(&StructureRecord, MatchKind), StructDbError> {
        let raw = raw.trim();
        if raw.is_empty() {
            return Err(StructDbError::EmptyIdentifier);
        }
        if let Some(rec) = self.structures.get(raw) {
            return Ok((rec, MatchKind::StructureId));
        }
        let lower = raw.to_lowercase();
        let by_name: Vec<(&StructureRecord, MatchKind)> = self
            .structures
            .values()
            .filter_map(|r| {
                if r.structure_id.to_lowercase() == lower {
                    return Some((r, MatchKind::StructureId));
                }
                r.names.iter().position(|n| n.to_lowercase() == lower).map(|pos| {
                    (r, if pos == 0 { MatchKind::PrimaryName } else { MatchKind::Synonym })
                })
            })
            .collect();
        if let Some(found) = unique(raw, by_name)? {
            return Ok(found);
        }
        let formula = normalize_formula(raw);
        let by_formula: Vec<(&StructureRecord, MatchKind)> = self
            .structures
            .values()
            .filter(|r| !r.formula.is_empty() && normalize_formula(&r.formula) == formula)
            .map(|r| (r, MatchKind::Formula))
            .collect();
        if let Some(found) = unique(raw, by_formula)? {
            return Ok(found);
        }
        if let Some(t) = parse_pormake(raw) {
            if let Some(rec) = self.pormake.get(&pormake_key(&t)).and_then(|id| self.structures.get(id)) {
                return Ok((rec, MatchKind::Pormake));
            }
        }
        Err(StructDbError::NotFound(raw.to_string()))
    }

    /// Every string that resolves to a structure, for scanning free text.
    pub fn aliases(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in self.structures.values() {
            out.push(r.structure_id.clone());
            out.extend(r.names.iter().cloned());
        }
        out.extend(self.pormake.keys().cloned());
        out.sort();
        out.dedup();
        out
    }

    pub fn molecule(&self, name: &str) -> Option<&MoleculeRecord> {
        let lower = name.trim().to_lowercase();
        self.molecules.values().find(|m| {
            m.name.to_lowercase() == lower || m.synonyms.iter().any(|s| s.to_lowercase() == lower)
        })
    }

    pub fn lookup_forcefield(&self, species: &str) -> Result<SpeciesParams, StructDbError> {
        let key = self
            .forcefield
            .keys()
            .find(|k| k.eq_ignore_ascii_case(species.trim()))
            .ok_or_else(|| StructDbError::UnknownSpecies(species.to_string()))?;
        Ok(SpeciesParams { species: key.clone(), sites: self.forcefield[key].clone() })
    }
}

fn unique<'a>(
    raw: &str,
    mut found: Vec<(&'a StructureRecord, MatchKind)>,
) -> Result<Option<(&'a StructureRecord, MatchKind)>, StructDbError> {
    found.dedup_by(|a, b| a.0.structure_id == b.0.structure_id);
    match found.len() {
        0 => Ok(None),
        1 => Ok(found.pop()),
        _ => Err(StructDbError::Ambiguous {
            raw: raw.to_string(),
            candidates: found.iter().map(|(r, _)| r.structure_id.clone()).collect(),
        }),
    }
}

fn read(path: &Path) -> Result<String, StructDbError> {
    fs::read_to_string(path).map_err(|source| StructDbError::Io { path: path.to_path_buf(), source })
}

fn sorted_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, StructDbError> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let entries = fs::read_dir(dir).map_err(|source| StructDbError::Io { path: dir.to_path_buf(), source })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .collect();
    files.sort();
    Ok(files)
}

/// `species site element epsilon_K sigma_A charge_e source`, tab separated,
/// with a header line.
pub fn parse_forcefield_tsv(text: &str) -> Result<Vec<ForceFieldEntry>, (usize, String)> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 7 {
            return Err((i + 1, format!("expected 7 columns, got {}", cols.len())));
        }
        let num = |s: &str, what: &str| s.trim().parse::<f64>().map_err(|_| (i + 1, format!("bad {what} `{s}`")));
        let entry = ForceFieldEntry {
            species: cols[0].to_string(),
            site: cols[1].to_string(),
            element: cols[2].to_string(),
            lj_epsilon: num(cols[3], "epsilon")?,
            lj_sigma: num(cols[4], "sigma")?,
            charge: num(cols[5], "charge")?,
            source: cols[6].to_string(),
        };
        if entry.lj_epsilon < 0.0 || entry.lj_sigma <= 0.0 {
            return Err((i + 1, "epsilon must be >= 0 and sigma > 0".into()));
        }
        out.push(entry);
    }
    Ok(out)
}

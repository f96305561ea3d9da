//! Text record format for structures and molecules.
//!
//! ```text
//! id UIO66
//! name UiO-66
//! formula Zr6O4(OH)4(BDC)6
//! lattice 20.7465 20.7465 20.7465 90 90 90
//! valid true
//! [atoms]
//! Zr 0 0 0 2.0088
//! O 0.1 0.1 0.1 -
//! [descriptors]
//! pld 3.9
//! accessible_CH4 true
//! ```
//!
//! Atom lines carry an optional partial charge (`-` means unknown).
//! `atom_count` is written explicitly so descriptor-only records can exist
//! without an atom table.

use std::fmt::Write;

use super::{Atom, Descriptors, Lattice, MoleculeRecord, StructureRecord};
use crate::units::format_number;

type ParseResult<T> = Result<T, (usize, String)>;

#[derive(PartialEq)]
enum Section {
    Header,
    Atoms,
    Descriptors,
}

fn num(line: usize, s: &str) -> ParseResult<f64> {
    s.parse::<f64>().map_err(|_| (line, format!("bad number `{s}`")))
}

pub fn parse_structure(text: &str) -> ParseResult<StructureRecord> {
    let mut id = None;
    let mut names = Vec::new();
    let mut formula = String::new();
    let mut lattice = None;
    let mut valid = true;
    let mut atom_count = None;
    let mut atoms = Vec::new();
    let mut descriptors = Descriptors::default();
    let mut section = Section::Header;

    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line {
            "[atoms]" => {
                section = Section::Atoms;
                continue;
            }
            "[descriptors]" => {
                section = Section::Descriptors;
                continue;
            }
            _ => {}
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match section {
            Section::Header => {
                let rest = line[toks[0].len()..].trim();
                match toks[0] {
                    "id" => id = Some(rest.to_string()),
                    "name" => names.push(rest.to_string()),
                    "formula" => formula = rest.to_string(),
                    "valid" => {
                        valid = match rest {
                            "true" => true,
                            "false" => false,
                            _ => return Err((ln, format!("bad bool `{rest}`"))),
                        }
                    }
                    "atom_count" => {
                        atom_count = Some(rest.parse::<usize>().map_err(|_| (ln, format!("bad count `{rest}`")))?)
                    }
                    "lattice" => {
                        if toks.len() != 7 {
                            return Err((ln, "lattice needs a b c alpha beta gamma".into()));
                        }
                        let v: Vec<f64> = toks[1..].iter().map(|t| num(ln, t)).collect::<Result<_, _>>()?;
                        lattice = Some(Lattice { a: v[0], b: v[1], c: v[2], alpha: v[3], beta: v[4], gamma: v[5] });
                    }
                    other => return Err((ln, format!("unknown header key `{other}`"))),
                }
            }
            Section::Atoms => {
                if toks.len() != 4 && toks.len() != 5 {
                    return Err((ln, "atom line needs element fx fy fz [charge]".into()));
                }
                let charge = match toks.get(4) {
                    None | Some(&"-") => None,
                    Some(q) => Some(num(ln, q)?),
                };
                atoms.push(Atom {
                    element: toks[0].to_string(),
                    frac: [num(ln, toks[1])?, num(ln, toks[2])?, num(ln, toks[3])?],
                    charge,
                });
            }
            Section::Descriptors => {
                if toks.len() != 2 {
                    return Err((ln, "descriptor line needs `key value`".into()));
                }
                match toks[1] {
                    "true" => {
                        descriptors.flags.insert(toks[0].to_string(), true);
                    }
                    "false" => {
                        descriptors.flags.insert(toks[0].to_string(), false);
                    }
                    v => {
                        descriptors.values.insert(toks[0].to_string(), num(ln, v)?);
                    }
                }
            }
        }
    }

    let structure_id = id.ok_or((0, "missing `id`".to_string()))?;
    let lattice = lattice.ok_or((0, "missing `lattice`".to_string()))?;
    let atom_count = atom_count.unwrap_or(atoms.len());
    if !atoms.is_empty() && atom_count != atoms.len() {
        return Err((0, format!("atom_count {atom_count} != {} atom lines", atoms.len())));
    }
    Ok(StructureRecord { structure_id, names, formula, atom_count, lattice, atoms, descriptors, valid })
}

pub fn write_structure(rec: &StructureRecord) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "id {}", rec.structure_id);
    for n in &rec.names {
        let _ = writeln!(s, "name {n}");
    }
    if !rec.formula.is_empty() {
        let _ = writeln!(s, "formula {}", rec.formula);
    }
    let l = &rec.lattice;
    let _ = writeln!(
        s,
        "lattice {} {} {} {} {} {}",
        format_number(l.a),
        format_number(l.b),
        format_number(l.c),
        format_number(l.alpha),
        format_number(l.beta),
        format_number(l.gamma)
    );
    let _ = writeln!(s, "valid {}", rec.valid);
    let _ = writeln!(s, "atom_count {}", rec.atom_count);
    if !rec.atoms.is_empty() {
        s.push_str("[atoms]\n");
        for a in &rec.atoms {
            let q = a.charge.map(format_number).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                s,
                "{} {} {} {} {}",
                a.element,
                format_number(a.frac[0]),
                format_number(a.frac[1]),
                format_number(a.frac[2]),
                q
            );
        }
    }
    if !rec.descriptors.values.is_empty() || !rec.descriptors.flags.is_empty() {
        s.push_str("[descriptors]\n");
        for (k, v) in &rec.descriptors.values {
            let _ = writeln!(s, "{k} {}", format_number(*v));
        }
        for (k, v) in &rec.descriptors.flags {
            let _ = writeln!(s, "{k} {v}");
        }
    }
    s
}

/// Molecule records: `name`, repeated `synonym`, `net_charge`, then an
/// `[atoms]` table of `element x y z charge` in Cartesian Å.
pub fn parse_molecule(text: &str) -> ParseResult<MoleculeRecord> {
    let mut name = None;
    let mut synonyms = Vec::new();
    let mut net_charge = 0.0;
    let mut atoms = Vec::new();
    let mut charges = Vec::new();
    let mut in_atoms = false;
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line == "[atoms]" {
            in_atoms = true;
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if in_atoms {
            if toks.len() != 5 {
                return Err((ln, "atom line needs element x y z charge".into()));
            }
            atoms.push((toks[0].to_string(), [num(ln, toks[1])?, num(ln, toks[2])?, num(ln, toks[3])?]));
            charges.push(num(ln, toks[4])?);
        } else {
            let rest = line[toks[0].len()..].trim();
            match toks[0] {
                "name" => name = Some(rest.to_string()),
                "synonym" => synonyms.push(rest.to_string()),
                "net_charge" => net_charge = num(ln, rest)?,
                other => return Err((ln, format!("unknown molecule key `{other}`"))),
            }
        }
    }
    let mol = MoleculeRecord { name: name.ok_or((0, "missing `name`".to_string()))?, synonyms, net_charge, atoms, charges };
    if !mol.charge_balance_ok() {
        return Err((0, format!("charges of {} do not sum to net charge {}", mol.name, mol.net_charge)));
    }
    Ok(mol)
}

pub fn write_molecule(mol: &MoleculeRecord) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "name {}", mol.name);
    for syn in &mol.synonyms {
        let _ = writeln!(s, "synonym {syn}");
    }
    let _ = writeln!(s, "net_charge {}", format_number(mol.net_charge));
    s.push_str("[atoms]\n");
    for ((el, xyz), q) in mol.atoms.iter().zip(&mol.charges) {
        let _ = writeln!(
            s,
            "{el} {} {} {} {}",
            format_number(xyz[0]),
            format_number(xyz[1]),
            format_number(xyz[2]),
            format_number(*q)
        );
    }
    s
}

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Lattice, StructureRecord};

/// Atom pairs closer than this (minimum image) are reported as overlapping.
pub const OVERLAP_TOLERANCE: f64 = 0.5;

const ELEMENTS: [&str; 118] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl", "Ar", "K", "Ca",
    "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y",
    "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce",
    "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir",
    "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm",
    "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc",
    "Lv", "Ts", "Og",
];

pub fn is_element(symbol: &str) -> bool {
    ELEMENTS.contains(&symbol)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NoAtoms,
    NonPositiveVolume { volume: f64 },
    OverlappingAtoms { i: usize, j: usize, distance: f64 },
    UnknownElement { index: usize, element: String },
    MissingCharges { count: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoAtoms => write!(f, "structure has no atoms"),
            Violation::NonPositiveVolume { volume } => write!(f, "lattice volume {volume} is not positive"),
            Violation::OverlappingAtoms { i, j, distance } => {
                write!(f, "overlapping atoms {i} and {j} at {distance:.3} Å")
            }
            Violation::UnknownElement { index, element } => write!(f, "atom {index} has unknown element `{element}`"),
            Violation::MissingCharges { count } => {
                write!(f, "{count} atoms lack partial charges needed for electrostatics")
            }
        }
    }
}

/// Shortest Cartesian distance between two fractional positions over all
/// periodic images.
pub fn min_image_distance(lattice: &Lattice, a: [f64; 3], b: [f64; 3]) -> f64 {
    let mut d = [0.0; 3];
    for k in 0..3 {
        let x = b[k] - a[k];
        d[k] = x - x.round();
    }
    let mut best = f64::INFINITY;
    for i in -1..=1 {
        for j in -1..=1 {
            for k in -1..=1 {
                let v = lattice.to_cartesian([d[0] + i as f64, d[1] + j as f64, d[2] + k as f64]);
                best = best.min((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt());
            }
        }
    }
    best
}

pub fn consistency_check(rec: &StructureRecord) -> Vec<Violation> {
    consistency_check_with(rec, false)
}

/// Like [`consistency_check`], additionally flagging atoms without partial
/// charges when the downstream deck needs electrostatics.
pub fn consistency_check_with(rec: &StructureRecord, require_charges: bool) -> Vec<Violation> {
    let mut out = Vec::new();
    if rec.atoms.is_empty() {
        out.push(Violation::NoAtoms);
    }
    let volume = rec.lattice.volume();
    if volume <= 0.0 {
        out.push(Violation::NonPositiveVolume { volume });
    }
    for (index, atom) in rec.atoms.iter().enumerate() {
        if !is_element(&atom.element) {
            out.push(Violation::UnknownElement { index, element: atom.element.clone() });
        }
    }
    if volume > 0.0 {
        for i in 0..rec.atoms.len() {
            for j in i + 1..rec.atoms.len() {
                let distance = min_image_distance(&rec.lattice, rec.atoms[i].frac, rec.atoms[j].frac);
                if distance < OVERLAP_TOLERANCE {
                    out.push(Violation::OverlappingAtoms { i, j, distance });
                }
            }
        }
    }
    if require_charges {
        let count = rec.atoms.iter().filter(|a| a.charge.is_none()).count();
        if count > 0 {
            out.push(Violation::MissingCharges { count });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::{Atom, Descriptors};
    use super::*;

    fn cell(atoms: Vec<([f64; 3], &str)>, lattice: Lattice) -> StructureRecord {
        StructureRecord {
            structure_id: "SYNTH1".into(),
            names: vec![],
            formula: String::new(),
            atom_count: atoms.len(),
            lattice,
            atoms: atoms
                .into_iter()
                .map(|(frac, el)| Atom { element: el.into(), frac, charge: Some(0.0) })
                .collect(),
            descriptors: Descriptors::default(),
            valid: true,
        }
    }

    #[test]
    fn well_formed_passes() {
        let rec = cell(vec![([0.0, 0.0, 0.0], "Zr"), ([0.5, 0.5, 0.5], "O")], Lattice::cubic(10.0));
        assert!(consistency_check(&rec).is_empty());
    }

    #[test]
    fn identical_positions_overlap() {
        let rec = cell(vec![([0.2, 0.2, 0.2], "C"), ([0.2, 0.2, 0.2], "C")], Lattice::cubic(10.0));
        let v = consistency_check(&rec);
        assert_eq!(v.len(), 1);
        assert!(v[0].to_string().starts_with("overlapping atoms"));
    }

    #[test]
    fn empty_and_bad_elements() {
        let rec = cell(vec![], Lattice::cubic(10.0));
        assert_eq!(consistency_check(&rec), vec![Violation::NoAtoms]);
        let rec = cell(vec![([0.0; 3], "Xx")], Lattice::cubic(10.0));
        assert!(matches!(consistency_check(&rec)[0], Violation::UnknownElement { .. }));
        let mut rec = cell(vec![([0.0; 3], "C")], Lattice::cubic(10.0));
        rec.atoms[0].charge = None;
        assert!(consistency_check(&rec).is_empty());
        assert_eq!(consistency_check_with(&rec, true), vec![Violation::MissingCharges { count: 1 }]);
    }

    #[test]
    fn skewed_cell_minimum_image() {
        let lat = Lattice { a: 10.0, b: 10.0, c: 10.0, alpha: 90.0, beta: 90.0, gamma: 60.0 };
        let d = min_image_distance(&lat, [0.0; 3], [0.98, 0.02, 0.0]);
        let cart = lat.to_cartesian([-0.02, 0.02, 0.0]);
        let direct = (cart[0] * cart[0] + cart[1] * cart[1]).sqrt();
        assert!(d <= direct + 1e-12);
    }
}

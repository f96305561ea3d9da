//! Guest placement by seeded rejection sampling and the pairwise
//! Lennard-Jones surrogate used for prescreening.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ToolError;
use crate::structdb::{min_image_distance, Lattice, StructDb, StructureRecord};

const UFF: &str = include_str!("../../data/uff.tsv");

pub const CLEARANCE: f64 = 1.5;
pub const MAX_PROPOSALS: usize = 10_000;
/// Boltzmann constant in eV/K.
pub const KB_EV: f64 = 8.617_333_262e-5;

/// (epsilon K, sigma Å) for a framework element.
pub fn uff(element: &str) -> Option<(f64, f64)> {
    UFF.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()).find_map(|l| {
        let c: Vec<&str> = l.split('\t').collect();
        (c[0] == element).then(|| (c[1].parse().unwrap(), c[2].parse().unwrap()))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuestConfiguration {
    pub config_id: String,
    pub index: usize,
    pub host: String,
    pub guest: String,
    /// Cartesian Å.
    pub position: [f64; 3],
    /// Unit quaternion (w, x, y, z).
    pub orientation: [f64; 4],
    pub surrogate_energy: Option<f64>,
}

pub fn config_id(seed: u64, index: usize) -> String {
    format!("s{seed}-c{index:04}")
}

fn inverse(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (a, b) = ((j + 1) % 3, (j + 2) % 3);
            let (c, d) = ((i + 1) % 3, (i + 2) % 3);
            inv[i][j] = (m[a][c] * m[b][d] - m[a][d] * m[b][c]) / det;
        }
    }
    inv
}

/// Cartesian → fractional for the row-vector cell convention.
pub fn to_fractional(lattice: &Lattice, cart: [f64; 3]) -> [f64; 3] {
    let inv = inverse(lattice.matrix());
    let mut f = [0.0; 3];
    for (k, fk) in f.iter_mut().enumerate() {
        *fk = cart[0] * inv[0][k] + cart[1] * inv[1][k] + cart[2] * inv[2][k];
    }
    f
}

fn rotate(q: [f64; 4], v: [f64; 3]) -> [f64; 3] {
    let [w, x, y, z] = q;
    [
        (1.0 - 2.0 * (y * y + z * z)) * v[0] + 2.0 * (x * y - w * z) * v[1] + 2.0 * (x * z + w * y) * v[2],
        2.0 * (x * y + w * z) * v[0] + (1.0 - 2.0 * (x * x + z * z)) * v[1] + 2.0 * (y * z - w * x) * v[2],
        2.0 * (x * z - w * y) * v[0] + 2.0 * (y * z + w * x) * v[1] + (1.0 - 2.0 * (x * x + y * y)) * v[2],
    ]
}

fn clear(host: &StructureRecord, frac: [f64; 3]) -> bool {
    host.atoms.iter().all(|a| min_image_distance(&host.lattice, frac, a.frac) >= CLEARANCE)
}

/// `n` placements; configuration `i` draws from its own ChaCha stream so
/// it depends only on `(seed, i)`.
pub fn sample_configurations(
    host: &StructureRecord,
    guest: &str,
    n: usize,
    seed: u64,
) -> Result<Vec<GuestConfiguration>, ToolError> {
    if n == 0 {
        return Err(ToolError::ModelDomain("n_configs must be >= 1".into()));
    }
    if host.lattice.volume() <= 0.0 {
        return Err(ToolError::ModelDomain(format!("{} has no cell volume", host.structure_id)));
    }
    let mut out = Vec::with_capacity(n);
    for index in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        let mut placed = None;
        for _ in 0..MAX_PROPOSALS {
            let frac: [f64; 3] = [rng.random(), rng.random(), rng.random()];
            let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
            if clear(host, frac) {
                // uniform random rotation
                let tau = std::f64::consts::TAU;
                let q = [
                    (1.0 - u1).sqrt() * (tau * u2).sin(),
                    (1.0 - u1).sqrt() * (tau * u2).cos(),
                    u1.sqrt() * (tau * u3).sin(),
                    u1.sqrt() * (tau * u3).cos(),
                ];
                placed = Some((host.lattice.to_cartesian(frac), q));
                break;
            }
        }
        let (position, orientation) = placed.ok_or_else(|| ToolError::PlacementImpossible {
            host: host.structure_id.clone(),
            index,
            proposals: MAX_PROPOSALS,
        })?;
        out.push(GuestConfiguration {
            config_id: config_id(seed, index),
            index,
            host: host.structure_id.clone(),
            guest: guest.to_string(),
            position,
            orientation,
            surrogate_energy: None,
        });
    }
    Ok(out)
}

/// One interaction site of a guest: LJ parameters plus offset from the
/// molecular centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct GuestSite {
    pub epsilon: f64,
    pub sigma: f64,
    pub offset: [f64; 3],
}

/// Force-field sites of `guest`, positioned from the molecule record when
/// it has one atom per site, otherwise all at the centroid.
pub fn guest_sites(db: &StructDb, guest: &str) -> Result<Vec<GuestSite>, ToolError> {
    let params = db.lookup_forcefield(guest).map_err(|_| ToolError::ModelDomain(format!("no force field for `{guest}`")))?;
    let mol = db.molecule(guest).filter(|m| m.atoms.len() == params.sites.len());
    let offsets: Vec<[f64; 3]> = match mol {
        Some(m) => {
            let n = m.atoms.len() as f64;
            let mut c = [0.0; 3];
            for (_, p) in &m.atoms {
                for k in 0..3 {
                    c[k] += p[k] / n;
                }
            }
            m.atoms.iter().map(|(_, p)| [p[0] - c[0], p[1] - c[1], p[2] - c[2]]).collect()
        }
        None => vec![[0.0; 3]; params.sites.len()],
    };
    Ok(params.sites.iter().zip(offsets).map(|(s, offset)| GuestSite { epsilon: s.lj_epsilon, sigma: s.lj_sigma, offset }).collect())
}

/// Host-guest LJ energy in eV, Lorentz-Berthelot mixing, minimum image.
pub fn lj_energy(host: &StructureRecord, sites: &[GuestSite], position: [f64; 3], orientation: [f64; 4]) -> Result<f64, ToolError> {
    let mut params = Vec::with_capacity(host.atoms.len());
    for a in &host.atoms {
        params.push(uff(&a.element).ok_or_else(|| ToolError::ModelDomain(format!("no UFF parameters for `{}`", a.element)))?);
    }
    let mut e = 0.0;
    for s in sites {
        let r = rotate(orientation, s.offset);
        let frac = to_fractional(&host.lattice, [position[0] + r[0], position[1] + r[1], position[2] + r[2]]);
        for (a, (eps, sig)) in host.atoms.iter().zip(&params) {
            let d = min_image_distance(&host.lattice, frac, a.frac).max(0.1);
            let eps_ij = (s.epsilon * eps).sqrt();
            let sig_ij = 0.5 * (s.sigma + sig);
            let sr6 = (sig_ij / d).powi(6);
            e += 4.0 * eps_ij * (sr6 * sr6 - sr6);
        }
    }
    Ok(e * KB_EV)
}

/// Assigns surrogate energies and ranks ascending; ties go to the lower
/// index. Returns the selected config id and the ranked list.
pub fn mlip_prescreen(
    host: &StructureRecord,
    sites: &[GuestSite],
    configs: Vec<GuestConfiguration>,
) -> Result<(String, Vec<GuestConfiguration>), ToolError> {
    if configs.is_empty() {
        return Err(ToolError::ModelDomain("no configurations to prescreen".into()));
    }
    let mut ranked = Vec::with_capacity(configs.len());
    for mut c in configs {
        c.surrogate_energy = Some(lj_energy(host, sites, c.position, c.orientation)?);
        ranked.push(c);
    }
    ranked.sort_by(|a, b| {
        a.surrogate_energy.unwrap().total_cmp(&b.surrogate_energy.unwrap()).then(a.index.cmp(&b.index)).then_with(|| a.config_id.cmp(&b.config_id))
    });
    Ok((ranked[0].config_id.clone(), ranked))
}

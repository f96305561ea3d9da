//! Surrogate models used in model mode. Cheap, deterministic and
//! order-preserving; not physically faithful.

use std::collections::BTreeMap;

use super::sampling::{guest_sites, lj_energy, mlip_prescreen, sample_configurations, KB_EV};
use super::ToolError;
use crate::inputgen::InputDeck;
use crate::planner::Tool;
use crate::structdb::{StructDb, StructureRecord};
use crate::units::Measurement;

/// cm³(STP) of ideal gas per mmol.
pub const STP_CM3_PER_MMOL: f64 = 22.414;
/// Reference temperature of the diffusivity descriptors.
pub const DIFFUSION_REF_K: f64 = 298.0;
pub const DEFAULT_ACTIVATION_EV: f64 = 0.1;
/// Weight of the configuration LJ energy in dft binding surrogates.
pub const DFT_LJ_WEIGHT: f64 = 0.1;
/// Cohesive surrogate for hosts without an `energy` descriptor.
pub const ENERGY_PER_ATOM_EV: f64 = -5.0;

/// Isolated-molecule total energies (eV), synthetic placeholders.
pub fn guest_energy(guest: &str) -> Option<f64> {
    Some(match guest {
        "CO2" => -22.96,
        "H2O" => -14.22,
        "CH4" => -24.05,
        "N2" => -16.63,
        "H2" => -6.77,
        "O2" => -9.86,
        _ => return None,
    })
}

pub type Outputs = BTreeMap<String, Measurement>;

fn num(deck: &InputDeck, key: &str) -> Result<f64, ToolError> {
    let v = deck.get(key).ok_or_else(|| ToolError::ModelDomain(format!("deck lacks `{key}`")))?;
    v.trim().parse().map_err(|_| ToolError::ModelDomain(format!("`{key}` = `{v}` is not numeric")))
}

fn descriptor(rec: &StructureRecord, key: &str) -> Result<f64, ToolError> {
    rec.descriptors
        .get(key)
        .ok_or_else(|| ToolError::ModelDomain(format!("{} has no `{key}` descriptor", rec.structure_id)))
}

fn one(metric: &str, value: f64, unit: &str) -> Outputs {
    BTreeMap::from([(metric.to_string(), Measurement::new(value, unit))])
}

fn guest(deck: &InputDeck) -> Result<&str, ToolError> {
    deck.get("guest")
        .and_then(|g| g.split(',').next())
        .filter(|g| !g.is_empty())
        .ok_or_else(|| ToolError::ModelDomain("deck has no guest".into()))
}

/// Langmuir uptake in cm³/g with K = henry / q_sat.
pub fn langmuir_uptake(henry: f64, q_sat: f64, pressure: f64) -> Result<f64, ToolError> {
    if pressure < 0.0 {
        return Err(ToolError::ModelDomain(format!("negative pressure {pressure}")));
    }
    if q_sat <= 0.0 || henry < 0.0 {
        return Err(ToolError::ModelDomain("q_sat must be > 0 and henry >= 0".into()));
    }
    let k = henry / q_sat;
    Ok(q_sat * k * pressure / (1.0 + k * pressure) * STP_CM3_PER_MMOL)
}

/// Arrhenius scaling of a reference diffusivity.
pub fn arrhenius(d_ref: f64, activation_ev: f64, t: f64) -> Result<f64, ToolError> {
    if t <= 0.0 {
        return Err(ToolError::ModelDomain(format!("temperature {t} K")));
    }
    Ok(d_ref * (-(activation_ev / KB_EV) * (1.0 / t - 1.0 / DIFFUSION_REF_K)).exp())
}

fn binding(db: &StructDb, host: &StructureRecord, g: &str, config_index: usize, seed: u64) -> Result<f64, ToolError> {
    let base = host.descriptors.get(&format!("binding_{g}")).unwrap_or(0.0);
    if host.atoms.is_empty() {
        return Ok(base);
    }
    let sites = guest_sites(db, g)?;
    let configs = sample_configurations(host, g, config_index + 1, seed)?;
    let c = &configs[config_index];
    Ok(base + DFT_LJ_WEIGHT * lj_energy(host, &sites, c.position, c.orientation)?)
}

pub fn run(deck: &InputDeck, host: &StructureRecord, db: &StructDb, seed: u64) -> Result<Outputs, ToolError> {
    let task = deck.task();
    match (deck.tool, task) {
        (Tool::Geometry, "surface_area") => Ok(one("surface_area", descriptor(host, "surface_area")?, "m²/g")),
        (Tool::Geometry, "pore_diameter") => {
            let mut o = one("pld", descriptor(host, "pld")?, "Å");
            o.insert("lcd".into(), Measurement::new(descriptor(host, "lcd")?, "Å"));
            Ok(o)
        }
        (Tool::Geometry, "pore_volume") => Ok(one("pore_volume", descriptor(host, "pore_volume")?, "cm³/g")),
        (Tool::Geometry, "pore_size_distribution") => Ok(one("psd_peak", descriptor(host, "lcd")?, "Å")),
        (Tool::Gcmc, "uptake") => {
            let g = guest(deck)?;
            let henry = descriptor(host, &format!("henry_{g}"))?;
            let q_sat = descriptor(host, &format!("qsat_{g}"))?;
            Ok(one("uptake", langmuir_uptake(henry, q_sat, num(deck, "pressure")?)?, "cm³/g"))
        }
        (Tool::Gcmc, "henry") => {
            let g = guest(deck)?;
            Ok(one("henry", descriptor(host, &format!("henry_{g}"))?, "mol/kg/Pa"))
        }
        (Tool::Md, "diffusion") => {
            let g = guest(deck)?;
            let d = descriptor(host, &format!("diffusivity_{g}"))?;
            let ea = host.descriptors.get(&format!("ea_{g}")).unwrap_or(DEFAULT_ACTIVATION_EV);
            Ok(one("diffusivity", arrhenius(d, ea, num(deck, "temperature")?)?, "cm²/s"))
        }
        (Tool::Md, "interaction_energy") => {
            let g = guest(deck)?;
            let sites = guest_sites(db, g)?;
            let configs = sample_configurations(host, g, 10, seed)?;
            let mut sum = 0.0;
            for c in &configs {
                sum += lj_energy(host, &sites, c.position, c.orientation)?;
            }
            Ok(one("interaction_energy", sum / configs.len() as f64, "eV"))
        }
        (Tool::Md, "rdf") => {
            let g = guest(deck)?;
            let sites = guest_sites(db, g)?;
            Ok(one("rdf_peak", 2f64.powf(1.0 / 6.0) * sites[0].sigma, "Å"))
        }
        (Tool::Dft, "band_gap") => Ok(one("band_gap", descriptor(host, "band_gap")?, "eV")),
        (Tool::Dft, "geometry_optimization") => {
            let e_host = host.descriptors.get("energy").unwrap_or(ENERGY_PER_ATOM_EV * host.atom_count as f64);
            let e = match deck.get("target").unwrap_or("host") {
                "host" => e_host,
                "guest" => {
                    let g = guest(deck)?;
                    guest_energy(g).ok_or_else(|| ToolError::ModelDomain(format!("no reference energy for `{g}`")))?
                }
                "complex" => {
                    let g = guest(deck)?;
                    let idx = num(deck, "config_index")? as usize;
                    e_host + guest_energy(g).unwrap_or(0.0) + binding(db, host, g, idx, seed)?
                }
                other => return Err(ToolError::ModelDomain(format!("unknown target `{other}`"))),
            };
            Ok(one("energy", e, "eV"))
        }
        (Tool::Dft, "binding_energy") => {
            let g = guest(deck)?;
            let idx = num(deck, "config_index")? as usize;
            Ok(one("binding_energy", binding(db, host, g, idx, seed)?, "eV"))
        }
        (Tool::Dft, "charge_density") => Ok(one("charge_density_ready", 1.0, "count")),
        (Tool::Dft, "bader") => {
            let key = match deck.get("guest") {
                Some(g) if !g.is_empty() => format!("charge_transfer_{}", g.split(',').next().unwrap()),
                _ => "charge_transfer".to_string(),
            };
            Ok(one("charge_transfer", descriptor(host, &key)?, "e"))
        }
        (Tool::Mlip, "prescreen") => {
            let g = guest(deck)?;
            let n = num(deck, "n_configs")? as usize;
            let s = num(deck, "seed")? as u64;
            let sites = guest_sites(db, g)?;
            let configs = sample_configurations(host, g, n, s)?;
            let (_, ranked) = mlip_prescreen(host, &sites, configs)?;
            let mut o = one("selected_index", ranked[0].index as f64, "count");
            o.insert("selected_energy".into(), Measurement::new(ranked[0].surrogate_energy.unwrap(), "eV"));
            Ok(o)
        }
        (tool, task) => Err(ToolError::ModelDomain(format!("no {} surrogate for task `{task}`", tool.name()))),
    }
}

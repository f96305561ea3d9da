//! Per-tool deck grammars: canonical key order, rendered keyword, and the
//! mandatory key set. See `docs/decks.md`.

use crate::planner::Tool;

/// (canonical key, rendered keyword)
type KeyTable = &'static [(&'static str, &'static str)];

const GEOMETRY: KeyTable = &[("task", "task"), ("structure", "structure"), ("probe_radius", "probe_radius"), ("samples", "samples")];

const GCMC: KeyTable = &[
    ("task", "SimulationTask"),
    ("structure", "FrameworkName"),
    ("guest", "Component"),
    ("forcefield", "Forcefield"),
    ("cycles", "NumberOfCycles"),
    ("init_cycles", "NumberOfInitializationCycles"),
    ("temperature", "ExternalTemperature"),
    ("pressure", "ExternalPressure"),
    ("cutoff", "CutOff"),
    ("charge_method", "ChargeMethod"),
];

const MD: KeyTable = &[
    ("task", "task"),
    ("structure", "read_data"),
    ("guest", "molecule"),
    ("forcefield", "forcefield"),
    ("pair_style", "pair_style"),
    ("cutoff", "pair_cutoff"),
    ("kspace_style", "kspace_style"),
    ("ensemble", "ensemble"),
    ("temperature", "temperature"),
    ("timestep", "timestep"),
    ("steps", "run"),
];

const DFT: KeyTable = &[
    ("task", "TASK"),
    ("structure", "POSCAR"),
    ("target", "TARGET"),
    ("guest", "ADSORBATE"),
    ("config_index", "CONFIG"),
    ("encut", "ENCUT"),
    ("ediff", "EDIFF"),
    ("ediffg", "EDIFFG"),
    ("nelm", "NELM"),
    ("lcharg", "LCHARG"),
];

const MLIP: KeyTable = &[
    ("task", "task"),
    ("structure", "host"),
    ("guest", "guest"),
    ("potential", "potential"),
    ("n_configs", "n_configs"),
    ("seed", "seed"),
];

const SCREENING: KeyTable = &[
    ("task", "task"),
    ("database", "database"),
    ("objective", "objective"),
    ("downstream", "downstream"),
    ("top_n", "top_n"),
];

pub fn keys(tool: Tool) -> Option<KeyTable> {
    Some(match tool {
        Tool::Geometry => GEOMETRY,
        Tool::Gcmc => GCMC,
        Tool::Md => MD,
        Tool::Dft => DFT,
        Tool::Mlip => MLIP,
        Tool::Screening => SCREENING,
        Tool::Report => return None,
    })
}

pub fn position(tool: Tool, key: &str) -> Option<usize> {
    keys(tool)?.iter().position(|(k, _)| *k == key)
}

pub fn keyword(tool: Tool, key: &str) -> Option<&'static str> {
    keys(tool)?.iter().find(|(k, _)| *k == key).map(|(_, w)| *w)
}

pub fn canonical(tool: Tool, keyword: &str) -> Option<&'static str> {
    keys(tool)?.iter().find(|(_, w)| *w == keyword).map(|(k, _)| *k)
}

/// Keys that must be present for `tool` running `task`. `target` is the
/// dft target (host, guest, complex) when known.
pub fn mandatory(tool: Tool, task: &str, target: Option<&str>) -> Vec<&'static str> {
    match tool {
        Tool::Geometry if task == "pore_diameter" => vec!["task", "structure"],
        Tool::Geometry => vec!["task", "structure", "probe_radius", "samples"],
        Tool::Gcmc if task == "henry" => {
            vec!["task", "structure", "guest", "forcefield", "cycles", "temperature", "cutoff", "charge_method"]
        }
        Tool::Gcmc => GCMC.iter().map(|(k, _)| *k).collect(),
        Tool::Md => MD.iter().map(|(k, _)| *k).filter(|k| *k != "kspace_style").collect(),
        Tool::Dft if task == "bader" => vec!["task", "structure", "target"],
        Tool::Dft => {
            let mut m = vec!["task", "structure", "target", "encut", "ediff", "nelm"];
            match target {
                Some("guest") => m.push("guest"),
                Some("complex") => m.extend(["guest", "config_index"]),
                _ => {}
            }
            m
        }
        Tool::Mlip => MLIP.iter().map(|(k, _)| *k).collect(),
        Tool::Screening => SCREENING.iter().map(|(k, _)| *k).collect(),
        Tool::Report => Vec::new(),
    }
}

/// Geometry mode flag and output extension per task.
pub fn geometry_mode(task: &str) -> Option<(&'static str, &'static str)> {
    Some(match task {
        "surface_area" => ("-sa", "sa"),
        "pore_volume" => ("-vol", "vol"),
        "pore_size_distribution" => ("-psd", "psd"),
        "pore_diameter" => ("-res", "res"),
        _ => return None,
    })
}

pub fn geometry_task(flag: &str) -> Option<&'static str> {
    Some(match flag {
        "-sa" => "surface_area",
        "-vol" => "pore_volume",
        "-psd" => "pore_size_distribution",
        "-res" => "pore_diameter",
        _ => return None,
    })
}

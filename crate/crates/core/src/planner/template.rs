//! Data-driven plan templates and the default parameter table.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{PlannerError, Tool};
use crate::intent::{SettingValue, TaskKind};
use crate::units::Quantity;

const BUILTIN_TEMPLATES: &str = include_str!("../../data/templates.toml");
const BUILTIN_DEFAULTS: &str = include_str!("../../data/defaults.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Material,
    Once,
    Shortlist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputTemplate {
    pub from: String,
    pub metric: String,
    pub key: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobTemplate {
    pub role: String,
    pub tool: Tool,
    pub task: String,
    #[serde(default)]
    pub params: Vec<String>,
    #[serde(default)]
    pub fixed: BTreeMap<String, String>,
    #[serde(default)]
    pub inputs: Vec<InputTemplate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitTemplate {
    pub name: String,
    pub scope: Scope,
    #[serde(default)]
    pub edges: Vec<(String, String)>,
    #[serde(rename = "job")]
    pub jobs: Vec<JobTemplate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkTemplate {
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanTemplate {
    pub task: String,
    pub answer: Vec<String>,
    #[serde(default)]
    pub analysis: Option<String>,
    #[serde(rename = "unit")]
    pub units: Vec<UnitTemplate>,
    #[serde(default, rename = "link")]
    pub links: Vec<LinkTemplate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisTemplate {
    pub kind: String,
    pub task: String,
    pub after: Vec<String>,
    pub answer: Vec<String>,
    #[serde(default)]
    pub edges: Vec<(String, String)>,
    #[serde(rename = "job")]
    pub jobs: Vec<JobTemplate>,
}

#[derive(Debug, Deserialize)]
struct RegistryFile {
    #[serde(default, rename = "template")]
    templates: Vec<PlanTemplate>,
    #[serde(default)]
    analysis: Vec<AnalysisTemplate>,
}

/// Plan and analysis templates keyed by task slug / analysis kind.
#[derive(Debug, Clone, Default)]
pub struct TemplateRegistry {
    plans: BTreeMap<String, PlanTemplate>,
    analyses: BTreeMap<String, AnalysisTemplate>,
}

impl TemplateRegistry {
    pub fn builtin() -> Self {
        Self::from_toml(BUILTIN_TEMPLATES).expect("builtin templates are valid")
    }

    pub fn from_toml(text: &str) -> Result<Self, PlannerError> {
        let file: RegistryFile = toml::from_str(text).map_err(|e| PlannerError::Template(e.to_string()))?;
        let mut reg = TemplateRegistry::default();
        for t in file.templates {
            if TaskKind::from_slug(&t.task).is_none() {
                return Err(PlannerError::Template(format!("unknown task `{}`", t.task)));
            }
            for u in &t.units {
                check_jobs(&format!("{}.{}", t.task, u.name), &u.jobs, &u.edges, true)?;
            }
            let names: BTreeSet<&str> = t.units.iter().map(|u| u.name.as_str()).collect();
            for l in &t.links {
                if !names.contains(l.from.as_str()) || !names.contains(l.to.as_str()) {
                    return Err(PlannerError::Template(format!("{}: link {} -> {} names an unknown unit", t.task, l.from, l.to)));
                }
            }
            reg.plans.insert(t.task.clone(), t);
        }
        for a in file.analysis {
            check_jobs(&a.kind, &a.jobs, &a.edges, false)?;
            reg.analyses.insert(a.kind.clone(), a);
        }
        Ok(reg)
    }

    pub fn plan(&self, task: TaskKind) -> Option<&PlanTemplate> {
        self.plans.get(task.slug())
    }

    pub fn analysis(&self, kind: &str) -> Option<&AnalysisTemplate> {
        self.analyses.get(kind)
    }

    pub fn tasks(&self) -> impl Iterator<Item = &str> {
        self.plans.keys().map(String::as_str)
    }
}

/// Analysis jobs may read roles of the unit they are appended to, so their
/// inputs are only checked at expansion time (`strict_inputs = false`).
fn check_jobs(ctx: &str, jobs: &[JobTemplate], edges: &[(String, String)], strict_inputs: bool) -> Result<(), PlannerError> {
    let bad = |msg: String| Err(PlannerError::Template(format!("{ctx}: {msg}")));
    let mut roles = BTreeSet::new();
    for j in jobs {
        if !roles.insert(j.role.as_str()) {
            return bad(format!("duplicate role `{}`", j.role));
        }
    }
    for (a, b) in edges {
        if !roles.contains(a.as_str()) || !roles.contains(b.as_str()) {
            return bad(format!("edge {a} -> {b} names an unknown role"));
        }
    }
    for j in jobs {
        for i in &j.inputs {
            if strict_inputs && !roles.contains(i.from.as_str()) {
                return bad(format!("input of `{}` reads unknown role `{}`", j.role, i.from));
            }
        }
    }
    let nodes: Vec<String> = roles.iter().map(|s| s.to_string()).collect();
    if let Err(cycle) = super::graph::kahn_order(&nodes, edges) {
        return bad(format!("cycle through {}", cycle.join(" -> ")));
    }
    Ok(())
}

/// Default parameter values keyed by (task slug, parameter).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DefaultTable {
    entries: BTreeMap<(String, String), SettingValue>,
}

impl DefaultTable {
    pub fn builtin() -> Self {
        Self::from_toml(BUILTIN_DEFAULTS).expect("builtin defaults are valid")
    }

    pub fn from_toml(text: &str) -> Result<Self, PlannerError> {
        let raw: BTreeMap<String, BTreeMap<String, String>> =
            toml::from_str(text).map_err(|e| PlannerError::Template(e.to_string()))?;
        let mut entries = BTreeMap::new();
        for (task, params) in raw {
            for (param, value) in params {
                let v = match value.parse::<Quantity>() {
                    Ok(q) => SettingValue::Quantity(q),
                    Err(_) => SettingValue::Text(value),
                };
                entries.insert((task.clone(), param), v);
            }
        }
        Ok(DefaultTable { entries })
    }

    pub fn get(&self, task: TaskKind, param: &str) -> Option<&SettingValue> {
        self.entries.get(&(task.slug().to_string(), param.to_string()))
    }

    pub fn set(&mut self, task: TaskKind, param: &str, value: SettingValue) {
        self.entries.insert((task.slug().to_string(), param.to_string()), value);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

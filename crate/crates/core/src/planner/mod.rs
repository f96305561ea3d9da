//! Expands an intent into a plan: units of jobs plus dependency edges.
//!
//! Templates and defaults are data (`data/templates.toml`,
//! `data/defaults.toml`). Unit-level edges expand to all-to-all job edges.

pub mod graph;
pub mod template;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::intent::{Intent, SettingValue, TaskKind};
use crate::units::Measurement;

pub use template::{AnalysisTemplate, DefaultTable, JobTemplate, PlanTemplate, Scope, TemplateRegistry};

pub const REPORT_UNIT: &str = "report";
pub const REPORT_JOB: &str = "report/summary";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlannerError {
    #[error("no plan template registered for task `{0}`")]
    NoTemplate(String),
    #[error("material `{0}` is not resolved to a structure")]
    UnresolvedMaterial(String),
    #[error("parameter `{param}` of task `{task}` has no value and no default")]
    MissingParameter { task: String, param: String },
    #[error("dependency cycle: {}", .0.join(" -> "))]
    CycleDetected(Vec<String>),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("template error: {0}")]
    Template(String),
    #[error("analysis `{0}` is not supported here")]
    UnsupportedAnalysis(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tool {
    Geometry,
    Gcmc,
    Md,
    Dft,
    Mlip,
    Screening,
    Report,
}

impl Tool {
    pub fn name(self) -> &'static str {
        match self {
            Tool::Geometry => "geometry",
            Tool::Gcmc => "gcmc",
            Tool::Md => "md",
            Tool::Dft => "dft",
            Tool::Mlip => "mlip",
            Tool::Screening => "screening",
            Tool::Report => "report",
        }
    }

    pub fn default_cores(self) -> u32 {
        match self {
            Tool::Geometry => 1,
            Tool::Gcmc => 2,
            Tool::Md => 4,
            Tool::Dft => 8,
            Tool::Mlip | Tool::Screening | Tool::Report => 1,
        }
    }
}

impl fmt::Display for Tool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum JobStatus {
    Pending,
    Ready,
    Running,
    Succeeded,
    Failed,
    Recovering,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Succeeded | JobStatus::Failed)
    }

    /// Allowed single-step transitions of the job lifecycle.
    pub fn can_become(self, next: JobStatus) -> bool {
        use JobStatus::*;
        matches!(
            (self, next),
            (Pending, Ready)
                | (Ready, Running)
                | (Running, Succeeded)
                | (Running, Failed)
                | (Failed, Recovering)
                | (Recovering, Ready)
                // parked for confirmation, or upstream failure
                | (Ready, Recovering)
                | (Pending, Failed)
                | (Ready, Failed)
                | (Recovering, Failed)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamSource {
    Intent,
    ReferenceSettings,
    Default,
    Template,
    /// Filled at run time from an upstream job's output.
    Upstream,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub value: SettingValue,
    pub source: ParamSource,
}

/// A spec entry filled at run time from an upstream job's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputLink {
    pub from_job: String,
    pub metric: String,
    pub key: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub job_id: String,
    pub role: String,
    pub tool: Tool,
    pub task: String,
    pub spec: BTreeMap<String, Param>,
    pub materials: Vec<String>,
    #[serde(default)]
    pub guests: Vec<String>,
    /// Set for jobs bound to a screening shortlist rank (1-based).
    #[serde(default)]
    pub shortlist_rank: Option<usize>,
    #[serde(default)]
    pub inputs: Vec<InputLink>,
    pub status: JobStatus,
    pub cores_requested: u32,
    #[serde(default)]
    pub outputs: BTreeMap<String, Measurement>,
    /// Retrieval chunk ids that informed this job.
    #[serde(default)]
    pub evidence: Vec<String>,
}

impl Job {
    pub fn param(&self, key: &str) -> Option<&SettingValue> {
        self.spec.get(key).map(|p| &p.value)
    }

    pub fn material(&self) -> Option<&str> {
        self.materials.first().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanUnit {
    pub unit_id: String,
    #[serde(default)]
    pub material: Option<String>,
    pub jobs: Vec<Job>,
    pub intra_edges: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedDefault {
    pub parameter: String,
    pub value: SettingValue,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub plan_id: String,
    pub intent: Intent,
    pub units: Vec<PlanUnit>,
    pub edges: Vec<(String, String)>,
    pub applied_defaults: Vec<AppliedDefault>,
    /// Output metrics the final answer is drawn from.
    pub answer_metrics: Vec<String>,
}

impl Plan {
    pub fn jobs(&self) -> impl Iterator<Item = &Job> {
        self.units.iter().flat_map(|u| u.jobs.iter())
    }

    pub fn job(&self, id: &str) -> Option<&Job> {
        self.jobs().find(|j| j.job_id == id)
    }

    pub fn job_ids(&self) -> Vec<String> {
        self.jobs().map(|j| j.job_id.clone()).collect()
    }

    pub fn unit(&self, id: &str) -> Option<&PlanUnit> {
        self.units.iter().find(|u| u.unit_id == id)
    }

    /// All job-level edges: intra-unit edges plus unit edges expanded
    /// all-to-all between member jobs.
    pub fn job_edges(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = self.units.iter().flat_map(|u| u.intra_edges.iter().cloned()).collect();
        for (a, b) in &self.edges {
            let (Some(ua), Some(ub)) = (self.unit(a), self.unit(b)) else { continue };
            for ja in &ua.jobs {
                for jb in &ub.jobs {
                    out.push((ja.job_id.clone(), jb.job_id.clone()));
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }

    pub fn predecessors(&self) -> BTreeMap<String, BTreeSet<String>> {
        let mut pred: BTreeMap<String, BTreeSet<String>> = self.jobs().map(|j| (j.job_id.clone(), BTreeSet::new())).collect();
        for (a, b) in self.job_edges() {
            pred.entry(b).or_default().insert(a);
        }
        pred
    }

    pub fn topological_order(&self) -> Result<Vec<String>, PlannerError> {
        graph::kahn_order(&self.job_ids(), &self.job_edges()).map_err(PlannerError::CycleDetected)
    }

    /// Structural checks: unique ids, edges name real nodes, acyclic, and a
    /// single report unit that every compute unit reaches.
    pub fn validate(&self) -> Result<(), PlannerError> {
        let bad = |m: String| Err(PlannerError::InvalidPlan(m));
        let mut unit_ids = BTreeSet::new();
        let mut job_ids = BTreeSet::new();
        for u in &self.units {
            if !unit_ids.insert(u.unit_id.as_str()) {
                return bad(format!("duplicate unit `{}`", u.unit_id));
            }
            for j in &u.jobs {
                if !job_ids.insert(j.job_id.as_str()) {
                    return bad(format!("duplicate job `{}`", j.job_id));
                }
                if j.cores_requested == 0 {
                    return bad(format!("job `{}` requests zero cores", j.job_id));
                }
            }
            let local: BTreeSet<&str> = u.jobs.iter().map(|j| j.job_id.as_str()).collect();
            for (a, b) in &u.intra_edges {
                if !local.contains(a.as_str()) || !local.contains(b.as_str()) {
                    return bad(format!("intra edge {a} -> {b} leaves unit `{}`", u.unit_id));
                }
            }
        }
        for (a, b) in &self.edges {
            if !unit_ids.contains(a.as_str()) || !unit_ids.contains(b.as_str()) {
                return bad(format!("unit edge {a} -> {b} names an unknown unit"));
            }
        }
        let units: Vec<String> = unit_ids.iter().map(|s| s.to_string()).collect();
        graph::kahn_order(&units, &self.edges).map_err(PlannerError::CycleDetected)?;
        self.topological_order()?;
        let sinks: Vec<&str> = units.iter().map(String::as_str).filter(|u| !self.edges.iter().any(|(a, _)| a == u)).collect();
        if sinks != [REPORT_UNIT] {
            return bad(format!("expected the report unit as the only sink, found {sinks:?}"));
        }
        for u in &units {
            if !graph::has_path(u, REPORT_UNIT, &self.edges) {
                return bad(format!("unit `{u}` does not reach the report"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(text: &str) -> Result<Plan, PlannerError> {
        let plan: Plan = serde_json::from_str(text).map_err(|e| PlannerError::InvalidPlan(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }
}

/// Pending jobs whose predecessors have all succeeded, ordered by id.
/// Jobs missing from `statuses` count as Pending.
pub fn ready_jobs<'a>(plan: &'a Plan, statuses: &BTreeMap<String, JobStatus>) -> Vec<&'a Job> {
    let status = |id: &str| statuses.get(id).copied().unwrap_or(JobStatus::Pending);
    let pred = plan.predecessors();
    let mut out: Vec<&Job> = plan
        .jobs()
        .filter(|j| status(&j.job_id) == JobStatus::Pending)
        .filter(|j| pred[&j.job_id].iter().all(|p| status(p) == JobStatus::Succeeded))
        .collect();
    out.sort_by(|a, b| a.job_id.cmp(&b.job_id));
    out
}

/// Values the intent supplies for template parameters.
fn intent_values(intent: &Intent) -> BTreeMap<String, SettingValue> {
    let mut v: BTreeMap<String, SettingValue> =
        intent.conditions.iter().map(|(k, q)| (k.clone(), SettingValue::Quantity(*q))).collect();
    if let Some(db) = &intent.database_scope {
        v.insert("database".into(), SettingValue::Text(db.clone()));
    }
    if let Some(o) = &intent.objective {
        v.insert("objective".into(), SettingValue::Text(o.clone()));
    }
    v
}

struct Ctx<'a> {
    intent: &'a Intent,
    task: TaskKind,
    defaults: &'a DefaultTable,
    given: BTreeMap<String, SettingValue>,
    applied: Vec<AppliedDefault>,
}

impl Ctx<'_> {
    fn resolve(&mut self, param: &str) -> Result<Param, PlannerError> {
        if let Some(v) = self.given.get(param) {
            return Ok(Param { value: v.clone(), source: ParamSource::Intent });
        }
        if let Some(v) = self.intent.reference_settings.as_ref().and_then(|r| r.get(param)) {
            return Ok(Param { value: v.clone(), source: ParamSource::ReferenceSettings });
        }
        let v = self.defaults.get(self.task, param).ok_or_else(|| PlannerError::MissingParameter {
            task: self.task.slug().into(),
            param: param.into(),
        })?;
        if !self.applied.iter().any(|d| d.parameter == param && &d.value == v) {
            self.applied.push(AppliedDefault { parameter: param.into(), value: v.clone(), source: "default".into() });
        }
        Ok(Param { value: v.clone(), source: ParamSource::Default })
    }

    fn job(&mut self, t: &JobTemplate, unit_id: &str, material: Option<&str>, rank: Option<usize>) -> Result<Job, PlannerError> {
        let mut spec = BTreeMap::new();
        for p in &t.params {
            spec.insert(p.clone(), self.resolve(p)?);
        }
        for (k, v) in &t.fixed {
            spec.insert(k.clone(), Param { value: SettingValue::Text(v.clone()), source: ParamSource::Template });
        }
        let guests = if t.tool == Tool::Geometry { Vec::new() } else { self.intent.guests.clone() };
        Ok(Job {
            job_id: format!("{unit_id}/{}", t.role),
            role: t.role.clone(),
            tool: t.tool,
            task: t.task.clone(),
            spec,
            materials: material.map(|m| vec![m.to_string()]).unwrap_or_default(),
            guests,
            shortlist_rank: rank,
            inputs: t
                .inputs
                .iter()
                .map(|i| InputLink { from_job: format!("{unit_id}/{}", i.from), metric: i.metric.clone(), key: i.key.clone() })
                .collect(),
            status: JobStatus::Pending,
            cores_requested: t.tool.default_cores(),
            outputs: BTreeMap::new(),
            evidence: Vec::new(),
        })
    }
}

fn count_param(p: &Param) -> Option<usize> {
    match &p.value {
        SettingValue::Quantity(q) if q.value >= 0.0 => Some(q.value as usize),
        _ => None,
    }
}

pub fn build_plan(intent: &Intent, defaults: &DefaultTable, templates: &TemplateRegistry) -> Result<Plan, PlannerError> {
    let task = intent.task_kind;
    let tpl = templates.plan(task).ok_or_else(|| PlannerError::NoTemplate(task.slug().into()))?;
    let mut materials: Vec<String> = Vec::new();
    for m in &intent.materials {
        let id = m.resolved_id.as_ref().ok_or_else(|| PlannerError::UnresolvedMaterial(m.raw_text.clone()))?;
        if !materials.contains(id) {
            materials.push(id.clone());
        }
    }
    let needs_material = tpl.units.iter().any(|u| u.scope == Scope::Material);
    if needs_material && materials.is_empty() {
        return Err(PlannerError::UnresolvedMaterial(String::new()));
    }

    let mut ctx = Ctx { intent, task, defaults, given: intent_values(intent), applied: Vec::new() };
    let mut units: Vec<PlanUnit> = Vec::new();
    let mut instances: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    let mut slots = 0usize;
    for ut in &tpl.units {
        let bindings: Vec<(String, Option<&str>, Option<usize>)> = match ut.scope {
            Scope::Material => materials.iter().map(|m| (format!("{}.{m}", ut.name), Some(m.as_str()), None)).collect(),
            Scope::Once => vec![(ut.name.clone(), None, None)],
            Scope::Shortlist => (1..=slots).map(|r| (format!("{}.{r:04}", ut.name), None, Some(r))).collect(),
        };
        for (unit_id, material, rank) in bindings {
            let mut jobs = Vec::with_capacity(ut.jobs.len());
            for jt in &ut.jobs {
                let job = ctx.job(jt, &unit_id, material, rank)?;
                if jt.tool == Tool::Screening {
                    slots = slots.max(job.spec.get("top_n").and_then(count_param).unwrap_or(0));
                }
                jobs.push(job);
            }
            let intra_edges = ut.edges.iter().map(|(a, b)| (format!("{unit_id}/{a}"), format!("{unit_id}/{b}"))).collect();
            instances.entry(ut.name.as_str()).or_default().push(unit_id.clone());
            units.push(PlanUnit { unit_id, material: material.map(str::to_string), jobs, intra_edges });
        }
    }

    let mut answer_metrics = tpl.answer.clone();
    if intent.analysis_requested {
        if let Some(kind) = &tpl.analysis {
            let a = templates.analysis(kind).ok_or_else(|| PlannerError::UnsupportedAnalysis(kind.clone()))?;
            append_analysis(&mut units, a, &mut ctx)?;
            answer_metrics.extend(a.answer.iter().cloned());
        }
    }

    let mut edges = Vec::new();
    for l in &tpl.links {
        for a in instances.get(l.from.as_str()).into_iter().flatten() {
            for b in instances.get(l.to.as_str()).into_iter().flatten() {
                edges.push((a.clone(), b.clone()));
            }
        }
    }
    let sinks: Vec<String> = units.iter().map(|u| u.unit_id.clone()).filter(|u| !edges.iter().any(|(a, _)| a == u)).collect();
    for s in sinks {
        edges.push((s, REPORT_UNIT.to_string()));
    }
    units.push(report_unit(&materials));

    let applied_defaults = ctx.applied;
    let plan_id = plan_id(intent);
    let plan = Plan { plan_id, intent: intent.clone(), units, edges, applied_defaults, answer_metrics };
    plan.validate()?;
    Ok(plan)
}

fn report_unit(materials: &[String]) -> PlanUnit {
    PlanUnit {
        unit_id: REPORT_UNIT.into(),
        material: None,
        jobs: vec![Job {
            job_id: REPORT_JOB.into(),
            role: "summary".into(),
            tool: Tool::Report,
            task: "summarize".into(),
            spec: BTreeMap::new(),
            materials: materials.to_vec(),
            guests: Vec::new(),
            shortlist_rank: None,
            inputs: Vec::new(),
            status: JobStatus::Pending,
            cores_requested: Tool::Report.default_cores(),
            outputs: BTreeMap::new(),
            evidence: Vec::new(),
        }],
        intra_edges: Vec::new(),
    }
}

fn plan_id(intent: &Intent) -> String {
    let json = serde_json::to_string(intent).expect("intent serializes");
    let digest = Sha256::digest(json.as_bytes());
    let hex: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
    format!("plan-{hex}")
}

/// Appends analysis jobs to every unit holding all `after` roles. Returns
/// the ids of the jobs added.
fn append_analysis(units: &mut [PlanUnit], a: &AnalysisTemplate, ctx: &mut Ctx<'_>) -> Result<Vec<String>, PlannerError> {
    let mut added = Vec::new();
    let roots: Vec<&str> =
        a.jobs.iter().map(|j| j.role.as_str()).filter(|r| !a.edges.iter().any(|(_, b)| b == r)).collect();
    for unit in units.iter_mut() {
        let has = |jobs: &[Job], role: &str| jobs.iter().any(|j| j.role == role);
        if !a.after.iter().all(|r| has(&unit.jobs, r)) {
            continue;
        }
        let unit_id = unit.unit_id.clone();
        let material = unit.material.clone();
        for jt in &a.jobs {
            if has(&unit.jobs, &jt.role) {
                return Err(PlannerError::Template(format!("analysis role `{}` clashes in `{unit_id}`", jt.role)));
            }
            let job = ctx.job(jt, &unit_id, material.as_deref(), None)?;
            for i in &job.inputs {
                if !unit.jobs.iter().any(|j| j.job_id == i.from_job) {
                    return Err(PlannerError::Template(format!("analysis input `{}` missing in `{unit_id}`", i.from_job)));
                }
            }
            added.push(job.job_id.clone());
            unit.jobs.push(job);
        }
        for (x, y) in &a.edges {
            unit.intra_edges.push((format!("{unit_id}/{x}"), format!("{unit_id}/{y}")));
        }
        for after in &a.after {
            for r in &roots {
                unit.intra_edges.push((format!("{unit_id}/{after}"), format!("{unit_id}/{r}")));
            }
        }
    }
    Ok(added)
}

/// Adds the analysis template `kind` to an existing plan (used for follow-up
/// analysis requested after the primary plan was built).
pub fn extend_with_analysis(
    plan: &mut Plan,
    kind: &str,
    defaults: &DefaultTable,
    templates: &TemplateRegistry,
    evidence: &[String],
) -> Result<Vec<String>, PlannerError> {
    let a = templates.analysis(kind).ok_or_else(|| PlannerError::UnsupportedAnalysis(kind.into()))?;
    let intent = plan.intent.clone();
    let task = TaskKind::from_slug(&a.task).ok_or_else(|| PlannerError::UnsupportedAnalysis(kind.into()))?;
    let mut ctx = Ctx { intent: &intent, task, defaults, given: intent_values(&intent), applied: plan.applied_defaults.clone() };
    let added = append_analysis(&mut plan.units, a, &mut ctx)?;
    if added.is_empty() {
        return Err(PlannerError::UnsupportedAnalysis(kind.into()));
    }
    for u in plan.units.iter_mut() {
        for j in u.jobs.iter_mut().filter(|j| added.contains(&j.job_id)) {
            j.evidence = evidence.to_vec();
        }
    }
    plan.applied_defaults = ctx.applied;
    for m in &a.answer {
        if !plan.answer_metrics.contains(m) {
            plan.answer_metrics.push(m.clone());
        }
    }
    plan.validate()?;
    Ok(added)
}

#[cfg(test)]
mod tests;

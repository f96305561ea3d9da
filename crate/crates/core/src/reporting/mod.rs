//! Final reports, follow-up analysis units and the reference benchmark
//! table.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::executor::{RunOutcome, RunRecord};
use crate::guard::{Change, RecoveryAction, Severity};
use crate::intent::{Intent, SettingValue, TaskKind};
use crate::planner::{extend_with_analysis, AppliedDefault, DefaultTable, Plan, PlannerError, TemplateRegistry, Tool};
use crate::retrieval::RetrievalHit;
use crate::units::{format_number, Measurement};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReportError {
    #[error("run {run_id} did not complete: {reason}")]
    IncompleteRun { run_id: String, reason: String, partial: Box<Report> },
    #[error("unsupported analysis: {0}")]
    UnsupportedAnalysis(String),
    #[error("reference value is zero for {0}")]
    ZeroReference(String),
    #[error("benchmark table line {line}: {msg}")]
    BadTable { line: usize, msg: String },
}

impl From<PlannerError> for ReportError {
    fn from(e: PlannerError) -> Self {
        match e {
            PlannerError::UnsupportedAnalysis(k) => ReportError::UnsupportedAnalysis(k),
            other => ReportError::UnsupportedAnalysis(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerEntry {
    pub job_id: String,
    /// Structure id the value belongs to, if any.
    pub material: Option<String>,
    /// Name the user used for the material, falling back to the id.
    pub label: String,
    pub metric: String,
    pub value: Measurement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionEntry {
    pub job_id: String,
    pub rule_id: String,
    pub severity: Severity,
    pub confirmed: bool,
    pub changes: Vec<Change>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryEntry {
    pub job_id: String,
    pub action: RecoveryAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub run_id: String,
    pub plan_id: String,
    pub task_kind: TaskKind,
    pub completed: bool,
    pub answer: Vec<AnswerEntry>,
    pub applied_defaults: Vec<AppliedDefault>,
    pub corrections: Vec<CorrectionEntry>,
    pub recoveries: Vec<RecoveryEntry>,
    /// Shortlist slots that had no structure to evaluate.
    pub skipped: Vec<String>,
    pub abort: Option<(String, String)>,
    pub narrative: String,
}

impl Report {
    pub fn value(&self, material: &str, metric: &str) -> Option<&Measurement> {
        self.answer.iter().find(|a| a.material.as_deref() == Some(material) && a.metric == metric).map(|a| &a.value)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn metric_label(metric: &str) -> String {
    match metric {
        "pld" => "pore-limiting diameter".into(),
        "lcd" => "largest cavity diameter".into(),
        "psd_peak" => "pore size distribution peak".into(),
        "rdf_peak" => "first RDF peak".into(),
        "henry" => "Henry coefficient".into(),
        m => m.replace('_', " "),
    }
}

fn setting_text(v: &SettingValue) -> String {
    match v {
        SettingValue::Quantity(q) => q.to_string(),
        SettingValue::Text(t) => t.clone(),
    }
}

fn change_text(c: &Change) -> String {
    let before = c.before.as_deref().unwrap_or("(unset)");
    let after = if c.after.is_empty() { "(removed)" } else { c.after.as_str() };
    format!("{}: {before} -> {after}", c.key)
}

fn render_narrative(r: &Report, guests: &[String]) -> String {
    let mut s = String::new();
    if r.answer.is_empty() {
        s.push_str("No results were produced.\n");
    }
    for a in &r.answer {
        let with = if guests.is_empty() || a.metric.contains("surface") || a.metric == "pld" || a.metric == "lcd" {
            String::new()
        } else {
            format!(" ({})", guests.join(", "))
        };
        let _ = writeln!(s, "{}: {}{with} = {}.", a.label, metric_label(&a.metric), a.value);
    }
    for d in &r.applied_defaults {
        let _ = writeln!(s, "Note: {} was not specified; the default {} was used.", d.parameter, setting_text(&d.value));
    }
    for c in &r.corrections {
        let how = if c.confirmed { "confirmed by the user" } else { "applied automatically" };
        let changes: Vec<String> = c.changes.iter().map(change_text).collect();
        let _ = writeln!(s, "Correction {} on {} ({how}): {}.", c.rule_id, c.job_id, changes.join("; "));
    }
    for rec in &r.recoveries {
        let what = match &rec.action {
            RecoveryAction::Rewrite { attempt, changes } => {
                format!("attempt {attempt} rewrote {}", changes.iter().map(change_text).collect::<Vec<_>>().join("; "))
            }
            RecoveryAction::Requeue { attempt } => format!("attempt {attempt} requeued"),
            RecoveryAction::Abort { attempt, reason } => format!("attempt {attempt} gave up: {reason}"),
        };
        let _ = writeln!(s, "Recovery on {}: {what}.", rec.job_id);
    }
    if !r.skipped.is_empty() {
        let _ = writeln!(s, "{} shortlist slot(s) were empty and skipped.", r.skipped.len());
    }
    if let Some((job, reason)) = &r.abort {
        let _ = writeln!(s, "The run stopped at {job}: {reason}. Results above are partial.");
    }
    s
}

/// Builds the report for a finished run. Aborted runs yield
/// [`ReportError::IncompleteRun`] carrying the partial report.
pub fn summarize_run(run: &RunRecord, intent: &Intent) -> Result<Report, ReportError> {
    let labels: BTreeMap<&str, &str> =
        intent.materials.iter().filter_map(|m| m.resolved_id.as_deref().map(|id| (id, m.raw_text.as_str()))).collect();
    let plan = &run.plan;
    let mut answer = Vec::new();
    let mut corrections = Vec::new();
    let mut recoveries = Vec::new();
    let mut skipped = Vec::new();
    for job in plan.jobs() {
        let Some(rec) = run.jobs.get(&job.job_id) else { continue };
        for c in &rec.corrections {
            corrections.push(CorrectionEntry {
                job_id: rec.job_id.clone(),
                rule_id: c.rule_id.clone(),
                severity: c.severity,
                confirmed: c.confirmed,
                changes: c.changes.clone(),
            });
        }
        for a in &rec.recoveries {
            recoveries.push(RecoveryEntry { job_id: rec.job_id.clone(), action: a.clone() });
        }
        if rec.skipped {
            skipped.push(rec.job_id.clone());
            continue;
        }
        if rec.tool == Tool::Report || rec.status != crate::planner::JobStatus::Succeeded {
            continue;
        }
        let material = rec
            .deck()
            .and_then(|d| d.get("structure"))
            .map(str::to_string)
            .or_else(|| rec.materials.first().cloned());
        for metric in &plan.answer_metrics {
            if let Some(v) = rec.outputs.get(metric) {
                let label = material.as_deref().map(|m| labels.get(m).copied().unwrap_or(m).to_string()).unwrap_or_default();
                answer.push(AnswerEntry { job_id: rec.job_id.clone(), material: material.clone(), label, metric: metric.clone(), value: v.clone() });
            }
        }
    }
    let abort = match &run.outcome {
        RunOutcome::Aborted { job_id, reason } => Some((job_id.clone(), reason.clone())),
        _ => None,
    };
    let completed = run.is_terminal() && abort.is_none() && run.outcome == RunOutcome::Completed;
    let mut report = Report {
        run_id: run.run_id.clone(),
        plan_id: plan.plan_id.clone(),
        task_kind: intent.task_kind,
        completed,
        answer,
        applied_defaults: plan.applied_defaults.clone(),
        corrections,
        recoveries,
        skipped,
        abort,
        narrative: String::new(),
    };
    report.narrative = render_narrative(&report, &intent.guests);
    if completed {
        return Ok(report);
    }
    let reason = match &report.abort {
        Some((job, why)) => format!("{job}: {why}"),
        None => "jobs are still running".to_string(),
    };
    Err(ReportError::IncompleteRun { run_id: run.run_id.clone(), reason, partial: Box::new(report) })
}

/// Follow-up analysis over materials already in a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRequest {
    /// Registered analysis kind, e.g. `binding_comparison`.
    pub kind: String,
    pub targets: Vec<String>,
    pub quantities: Vec<String>,
    #[serde(default)]
    pub evidence: Vec<RetrievalHit>,
}

impl AnalysisRequest {
    pub fn comparison(targets: &[&str], evidence: Vec<RetrievalHit>) -> Self {
        AnalysisRequest {
            kind: "binding_comparison".into(),
            targets: targets.iter().map(|t| t.to_string()).collect(),
            quantities: vec!["binding_energy".into(), "charge_transfer".into()],
            evidence,
        }
    }
}

/// Appends the analysis jobs to `plan` and returns their ids.
pub fn plan_analysis(
    plan: &mut Plan,
    request: &AnalysisRequest,
    defaults: &DefaultTable,
    templates: &TemplateRegistry,
) -> Result<Vec<String>, ReportError> {
    if request.kind.ends_with("comparison") && request.targets.len() < 2 {
        return Err(ReportError::UnsupportedAnalysis(format!("{} needs at least two targets", request.kind)));
    }
    let materials: Vec<&str> = plan.units.iter().filter_map(|u| u.material.as_deref()).collect();
    if let Some(t) = request.targets.iter().find(|t| !materials.contains(&t.as_str())) {
        return Err(ReportError::UnsupportedAnalysis(format!("`{t}` is not part of the plan")));
    }
    let evidence: Vec<String> = request.evidence.iter().map(|h| h.chunk_id.clone()).collect();
    Ok(extend_with_analysis(plan, &request.kind, defaults, templates, &evidence)?)
}

/// One benchmark case: a reference value, the query that should reproduce
/// it and the expected produced value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkCase {
    pub tool: String,
    pub structure_id: String,
    pub property: String,
    pub unit: String,
    pub reference_value: f64,
    pub expected_value: f64,
    pub source: String,
    pub query: String,
    pub metric: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkInput {
    pub tool: String,
    pub structure_id: String,
    pub property: String,
    pub unit: String,
    pub reference_value: f64,
    pub produced_value: f64,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub tool: String,
    pub structure_id: String,
    pub property: String,
    pub unit: String,
    pub reference_value: f64,
    pub produced_value: f64,
    pub relative_error_pct: f64,
    pub source: String,
}

pub const BENCHMARK_COLUMNS: [&str; 9] =
    ["tool", "structure_id", "property", "unit", "reference_value", "expected_value", "source", "query", "metric"];

/// Tab-separated, header first, columns as [`BENCHMARK_COLUMNS`].
pub fn parse_benchmark_table(text: &str) -> Result<Vec<BenchmarkCase>, ReportError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    let header: Vec<&str> = lines.next().map(|(_, l)| l.split('\t').collect()).unwrap_or_default();
    if header != BENCHMARK_COLUMNS {
        return Err(ReportError::BadTable { line: 1, msg: format!("header must be {}", BENCHMARK_COLUMNS.join(",")) });
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let bad = |msg: String| ReportError::BadTable { line: i + 1, msg };
        let c: Vec<&str> = line.split('\t').collect();
        if c.len() != BENCHMARK_COLUMNS.len() {
            return Err(bad(format!("expected {} columns, got {}", BENCHMARK_COLUMNS.len(), c.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("`{s}` is not a number")));
        out.push(BenchmarkCase {
            tool: c[0].into(),
            structure_id: c[1].into(),
            property: c[2].into(),
            unit: c[3].into(),
            reference_value: num(c[4])?,
            expected_value: num(c[5])?,
            source: c[6].into(),
            query: c[7].into(),
            metric: c[8].into(),
        });
    }
    Ok(out)
}

pub fn relative_error_pct(produced: f64, reference: f64) -> f64 {
    100.0 * (produced - reference).abs() / reference.abs()
}

/// Keeps the input order.
pub fn compare_to_reference(rows: &[BenchmarkInput]) -> Result<Vec<BenchmarkRow>, ReportError> {
    rows.iter()
        .map(|r| {
            if r.reference_value == 0.0 {
                return Err(ReportError::ZeroReference(format!("{} {} {}", r.tool, r.structure_id, r.property)));
            }
            Ok(BenchmarkRow {
                tool: r.tool.clone(),
                structure_id: r.structure_id.clone(),
                property: r.property.clone(),
                unit: r.unit.clone(),
                reference_value: r.reference_value,
                produced_value: r.produced_value,
                relative_error_pct: relative_error_pct(r.produced_value, r.reference_value),
                source: r.source.clone(),
            })
        })
        .collect()
}

pub fn render_benchmark_tsv(rows: &[BenchmarkRow]) -> String {
    let mut s = String::from("tool\tstructure_id\tproperty\tunit\treference_value\tproduced_value\terror_pct\tsource\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{:.2}\t{}",
            r.tool,
            r.structure_id,
            r.property,
            r.unit,
            format_number(r.reference_value),
            format_number(r.produced_value),
            r.relative_error_pct,
            r.source
        );
    }
    s
}

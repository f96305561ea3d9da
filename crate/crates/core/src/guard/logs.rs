//! Post-run log inspection and recovery planning.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::Change;
use crate::inputgen::InputDeck;
use crate::planner::Tool;
use crate::units::format_number;

/// Last line every adapter writes on success.
pub fn success_marker(tool: Tool) -> &'static str {
    match tool {
        Tool::Geometry => "network: finished",
        Tool::Gcmc => "Simulation finished, all cycles completed",
        Tool::Md => "Total wall time: done",
        Tool::Dft => "General timing and accounting informations for this job",
        Tool::Mlip => "mlip: prescreen complete",
        Tool::Screening => "funnel: complete",
        Tool::Report => "report: rendered",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureCategory {
    InputError,
    Convergence,
    Resource,
    ToolCrash,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposedAction {
    FixInput,
    AdjustParams,
    Retry,
    Abort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureDiagnosis {
    pub category: FailureCategory,
    pub evidence: String,
    pub proposed_action: ProposedAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum LogVerdict {
    Success,
    Failure(FailureDiagnosis),
}

struct Pattern {
    re: Regex,
    category: FailureCategory,
    action: ProposedAction,
}

static PATTERNS: LazyLock<Vec<Pattern>> = LazyLock::new(|| {
    let p = |re: &str, category, action| Pattern { re: Regex::new(re).unwrap(), category, action };
    use FailureCategory::*;
    use ProposedAction::*;
    vec![
        p(r"ERROR: missing key \S+", InputError, FixInput),
        p(r"ERROR: invalid value[^\n]*", InputError, FixInput),
        p(r"(?i)did not converge[^\n]*|ZBRENT[^\n]*|EDDDAV[^\n]*", Convergence, AdjustParams),
        p(r"(?i)out of memory|walltime exceeded|Killed", Resource, Retry),
        p(r"(?i)segmentation fault|core dumped|panicked at[^\n]*", ToolCrash, Retry),
    ]
});

/// Maps a run log to Success or a diagnosis. Error patterns take priority
/// over the success marker; anything else is `unknown`.
pub fn inspect_log(log: &str, tool: Tool) -> LogVerdict {
    for p in PATTERNS.iter() {
        if let Some(m) = p.re.find(log) {
            return LogVerdict::Failure(FailureDiagnosis {
                category: p.category,
                evidence: m.as_str().to_string(),
                proposed_action: p.action,
            });
        }
    }
    let last = log.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("");
    if last.trim_end() == success_marker(tool) {
        return LogVerdict::Success;
    }
    let tail: Vec<&str> = log.lines().rev().take(3).collect::<Vec<_>>().into_iter().rev().collect();
    LogVerdict::Failure(FailureDiagnosis {
        category: FailureCategory::Unknown,
        evidence: tail.join("\n"),
        proposed_action: ProposedAction::Retry,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum RecoveryAction {
    /// Rewrite the deck, then re-enqueue.
    Rewrite { attempt: u32, changes: Vec<Change> },
    Requeue { attempt: u32 },
    Abort { attempt: u32, reason: String },
}

impl RecoveryAction {
    pub fn is_abort(&self) -> bool {
        matches!(self, RecoveryAction::Abort { .. })
    }
}

/// Fallback values for keys reported missing by a tool.
fn fallback(key: &str) -> Option<&'static str> {
    Some(match key {
        "temperature" => "298",
        "pressure" => "100000",
        "cycles" | "init_cycles" => "10000",
        "cutoff" => "12",
        "timestep" => "1",
        "steps" => "1000000",
        "encut" => "520",
        "ediff" => "0.00001",
        "nelm" => "60",
        _ => return None,
    })
}

static MISSING_KEY: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"ERROR: missing key (\S+)").unwrap());

fn scaled(deck: &InputDeck, key: &str, f: impl Fn(f64) -> f64) -> Option<Change> {
    let before = deck.get(key)?;
    let v: f64 = before.parse().ok()?;
    Some(Change { key: key.into(), before: Some(before.into()), after: format_number(f(v)) })
}

/// Parameter loosening applied on convergence failures, per tool.
pub fn adjustments(deck: &InputDeck) -> Vec<Change> {
    match deck.tool {
        Tool::Dft => [scaled(deck, "ediff", |v| v * 10.0), scaled(deck, "nelm", |v| v + 60.0)].into_iter().flatten().collect(),
        Tool::Md => scaled(deck, "timestep", |v| v * 0.5).into_iter().collect(),
        Tool::Gcmc => scaled(deck, "init_cycles", |v| v * 2.0).into_iter().collect(),
        _ => Vec::new(),
    }
}

/// `attempt` is the 1-based number of the recovery being considered.
pub fn plan_recovery(diag: &FailureDiagnosis, deck: &InputDeck, attempt: u32, policy: RetryPolicy) -> RecoveryAction {
    if attempt > policy.max_attempts {
        return RecoveryAction::Abort { attempt, reason: format!("recovery budget of {} attempts exhausted", policy.max_attempts) };
    }
    match diag.proposed_action {
        ProposedAction::Abort => RecoveryAction::Abort { attempt, reason: diag.evidence.clone() },
        ProposedAction::Retry => RecoveryAction::Requeue { attempt },
        ProposedAction::AdjustParams => {
            let changes = adjustments(deck);
            if changes.is_empty() {
                RecoveryAction::Requeue { attempt }
            } else {
                RecoveryAction::Rewrite { attempt, changes }
            }
        }
        ProposedAction::FixInput => {
            let fix = MISSING_KEY.captures(&diag.evidence).and_then(|c| {
                let key = c[1].to_string();
                fallback(&key).map(|v| Change { before: deck.get(&key).map(str::to_string), key, after: v.to_string() })
            });
            match fix {
                Some(c) => RecoveryAction::Rewrite { attempt, changes: vec![c] },
                None => RecoveryAction::Requeue { attempt },
            }
        }
    }
}

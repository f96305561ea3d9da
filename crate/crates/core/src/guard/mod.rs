//! Deck validation with iterative correction, log inspection and bounded
//! recovery.

pub mod logs;
pub mod rules;

use std::collections::BTreeSet;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

pub use logs::{
    inspect_log, plan_recovery, success_marker, FailureCategory, FailureDiagnosis, LogVerdict, ProposedAction, RecoveryAction,
    RetryPolicy,
};
pub use rules::{RuleSet, Severity, SystemFlags, ValidationRule};

use crate::inputgen::{InputDeck, Provenance};
use crate::structdb::StructDb;

pub const MAX_VALIDATION_ITERATIONS: usize = 5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GuardError {
    #[error("rule registry: {0}")]
    Rule(String),
    #[error("findings persist after {iterations} validation passes: {}", .rule_ids.join(", "))]
    NonConvergence { iterations: usize, rule_ids: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Change {
    pub key: String,
    pub before: Option<String>,
    /// Empty means the key is removed.
    pub after: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correction {
    pub rule_id: String,
    pub severity: Severity,
    pub changes: Vec<Change>,
    pub confirmed: bool,
    /// Milliseconds since the Unix epoch; set when applied.
    pub applied_at: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub rule_id: String,
    pub severity: Severity,
    pub text: String,
    pub correction: Option<Correction>,
}

/// System flags for a deck: whether any referenced guest is charged.
pub fn system_flags(db: &StructDb, deck: &InputDeck) -> SystemFlags {
    let requires_electrostatics = deck
        .forcefield_refs
        .iter()
        .any(|g| db.lookup_forcefield(g).map(|p| p.requires_electrostatics()).unwrap_or(false));
    SystemFlags { requires_electrostatics }
}

/// Evaluates every rule; findings sorted by severity then rule id.
pub fn validate_deck(deck: &InputDeck, sys: SystemFlags, rules: &RuleSet) -> Vec<Finding> {
    let mut out: Vec<Finding> = rules
        .rules()
        .iter()
        .filter(|r| r.applies(deck, sys))
        .map(|r| {
            let changes: Vec<Change> = r
                .set
                .iter()
                .map(|(k, v)| Change { key: k.clone(), before: deck.get(k).map(str::to_string), after: v.clone() })
                .collect();
            let correction = (!changes.is_empty()).then(|| Correction {
                rule_id: r.id.clone(),
                severity: r.severity,
                changes,
                confirmed: false,
                applied_at: None,
            });
            Finding { rule_id: r.id.clone(), severity: r.severity, text: r.finding.clone(), correction }
        })
        .collect();
    out.sort_by(|a, b| (a.severity, &a.rule_id).cmp(&(b.severity, &b.rule_id)));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum ApplyOutcome {
    Applied { deck: InputDeck, applied: Vec<Correction> },
    /// Non-gated corrections were applied; these rule ids still need a
    /// user decision.
    AwaitingConfirmation { deck: InputDeck, applied: Vec<Correction>, pending: Vec<Correction> },
}

impl ApplyOutcome {
    pub fn deck(&self) -> &InputDeck {
        match self {
            ApplyOutcome::Applied { deck, .. } | ApplyOutcome::AwaitingConfirmation { deck, .. } => deck,
        }
    }

    pub fn applied(&self) -> &[Correction] {
        match self {
            ApplyOutcome::Applied { applied, .. } | ApplyOutcome::AwaitingConfirmation { applied, .. } => applied,
        }
    }
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

fn apply_one(deck: &mut InputDeck, c: &Correction) {
    for ch in &c.changes {
        if ch.after.is_empty() {
            deck.remove(&ch.key);
        } else {
            // rule keys are checked against the grammar when the rule fires
            let _ = deck.set(&ch.key, &ch.after, Provenance::Correction);
        }
    }
}

/// One correction pass. Physics changes are applied only when their rule
/// id is in `confirmations`.
pub fn apply_corrections(deck: &InputDeck, corrections: &[Correction], confirmations: &BTreeSet<String>) -> ApplyOutcome {
    let mut out = deck.clone();
    let mut applied = Vec::new();
    let mut pending = Vec::new();
    for c in corrections {
        let gated = c.severity == Severity::PhysicsChange;
        let confirmed = c.confirmed || confirmations.contains(&c.rule_id);
        if gated && !confirmed {
            pending.push(c.clone());
            continue;
        }
        apply_one(&mut out, c);
        applied.push(Correction { confirmed: gated || c.confirmed, applied_at: Some(now_ms()), ..c.clone() });
    }
    if pending.is_empty() {
        ApplyOutcome::Applied { deck: out, applied }
    } else {
        ApplyOutcome::AwaitingConfirmation { deck: out, applied, pending }
    }
}

/// Validate/apply loop until no correctable finding remains, a physics
/// change awaits confirmation, or the iteration bound is hit.
pub fn correct_until_fixpoint(
    deck: &InputDeck,
    sys: SystemFlags,
    rules: &RuleSet,
    confirmations: &BTreeSet<String>,
) -> Result<ApplyOutcome, GuardError> {
    let mut current = deck.clone();
    let mut applied = Vec::new();
    for _ in 0..MAX_VALIDATION_ITERATIONS {
        let corrections: Vec<Correction> = validate_deck(&current, sys, rules).into_iter().filter_map(|f| f.correction).collect();
        if corrections.is_empty() {
            return Ok(ApplyOutcome::Applied { deck: current, applied });
        }
        match apply_corrections(&current, &corrections, confirmations) {
            ApplyOutcome::Applied { deck, applied: a } => {
                applied.extend(a);
                current = deck;
            }
            ApplyOutcome::AwaitingConfirmation { deck, applied: a, pending } => {
                applied.extend(a);
                return Ok(ApplyOutcome::AwaitingConfirmation { deck, applied, pending });
            }
        }
    }
    let remaining: Vec<String> = validate_deck(&current, sys, rules)
        .into_iter()
        .filter(|f| f.correction.is_some())
        .map(|f| f.rule_id)
        .collect();
    if remaining.is_empty() {
        return Ok(ApplyOutcome::Applied { deck: current, applied });
    }
    Err(GuardError::NonConvergence { iterations: MAX_VALIDATION_ITERATIONS, rule_ids: remaining })
}

#[cfg(test)]
mod tests;

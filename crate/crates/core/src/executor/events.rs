//! Append-only execution events and the checks replayed over them.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    Enqueued,
    Started,
    Finished,
    ValidationFinding,
    CorrectionApplied,
    ConfirmationRequested,
    RecoveryScheduled,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionEvent {
    pub seq: u64,
    /// Milliseconds since the Unix epoch.
    pub time_ms: u64,
    pub job_id: String,
    pub kind: EventKind,
    pub payload: Value,
}

impl ExecutionEvent {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("event serializes")
    }

    pub fn from_line(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }

    fn succeeded(&self) -> bool {
        self.kind == EventKind::Finished && self.payload.get("status").and_then(Value::as_str) == Some("succeeded")
    }

    fn cores(&self) -> u32 {
        self.payload.get("cores").and_then(Value::as_u64).unwrap_or(0) as u32
    }
}

/// Parses an `events.log` body.
pub fn parse_log(text: &str) -> Result<Vec<ExecutionEvent>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(ExecutionEvent::from_line).collect()
}

/// Gapless, zero-based sequence numbers.
pub fn check_sequence(events: &[ExecutionEvent]) -> Result<(), String> {
    match events.iter().enumerate().find(|(i, e)| e.seq != *i as u64) {
        Some((i, e)) => Err(format!("event {i} carries seq {}", e.seq)),
        None => Ok(()),
    }
}

/// Every Started of `b` comes after a successful Finished of each
/// predecessor `a`.
pub fn check_dependency_order(events: &[ExecutionEvent], edges: &[(String, String)]) -> Result<(), String> {
    let mut done: BTreeSet<&str> = BTreeSet::new();
    let mut preds: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (a, b) in edges {
        preds.entry(b.as_str()).or_default().push(a.as_str());
    }
    for e in events {
        if e.kind == EventKind::Started {
            for p in preds.get(e.job_id.as_str()).into_iter().flatten() {
                if !done.contains(p) {
                    return Err(format!("seq {}: {} started before {p} succeeded", e.seq, e.job_id));
                }
            }
        }
        if e.succeeded() {
            done.insert(&e.job_id);
        }
    }
    Ok(())
}

/// Replays Started/Finished core counts; returns the peak usage.
pub fn check_pool(events: &[ExecutionEvent], total: u32) -> Result<u32, String> {
    let mut held: BTreeMap<&str, u32> = BTreeMap::new();
    let mut peak = 0;
    for e in events {
        match e.kind {
            EventKind::Started => {
                held.insert(&e.job_id, e.cores());
            }
            EventKind::Finished => {
                held.remove(e.job_id.as_str());
            }
            _ => {}
        }
        let used: u32 = held.values().sum();
        if used > total {
            return Err(format!("seq {}: {used} cores in use of {total}", e.seq));
        }
        peak = peak.max(used);
    }
    Ok(peak)
}

/// Most jobs simultaneously between Started and Finished.
pub fn max_concurrency(events: &[ExecutionEvent]) -> usize {
    let mut running = BTreeSet::new();
    let mut peak = 0;
    for e in events {
        match e.kind {
            EventKind::Started => {
                running.insert(e.job_id.as_str());
            }
            EventKind::Finished => {
                running.remove(e.job_id.as_str());
            }
            _ => {}
        }
        peak = peak.max(running.len());
    }
    peak
}

/// `[first Started, last Finished]` seq interval of a job.
pub fn interval(events: &[ExecutionEvent], job_id: &str) -> Option<(u64, u64)> {
    let start = events.iter().find(|e| e.job_id == job_id && e.kind == EventKind::Started)?.seq;
    let end = events.iter().rev().find(|e| e.job_id == job_id && e.kind == EventKind::Finished)?.seq;
    Some((start, end))
}

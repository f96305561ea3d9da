//! Runs a plan: core allocation, concurrent job workers, guard hooks and
//! an ordered event log.

pub mod events;
pub mod pool;
mod run;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::mpsc::Sender;
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use events::{EventKind, ExecutionEvent};
pub use pool::{schedule, Allocation, ResourcePool};

use crate::guard::{Correction, FailureDiagnosis, Finding, RecoveryAction, RetryPolicy, RuleSet};
use crate::inputgen::InputDeck;
use crate::planner::{JobStatus, Plan, Tool};
use crate::retrieval::RetrievalHit;
use crate::structdb::StructDb;
use crate::toolkit::ToolAdapter;
use crate::units::Measurement;

pub const DECLINED: &str = "user declined correction";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExecError {
    #[error("executor config: {0}")]
    Config(String),
    #[error("run aborted: job {job_id}: {reason}")]
    RunAborted { job_id: String, reason: String, record: Box<RunRecord> },
    #[error("no job awaits confirmation of `{0}`")]
    NotAwaiting(String),
    #[error("unknown run `{0}`")]
    UnknownRun(String),
    #[error("run thread failed: {0}")]
    Thread(String),
}

/// One adapter per tool, with a fallback.
#[derive(Clone)]
pub struct Adapters {
    default: Arc<dyn ToolAdapter>,
    by_tool: BTreeMap<Tool, Arc<dyn ToolAdapter>>,
}

impl Adapters {
    pub fn new(default: Arc<dyn ToolAdapter>) -> Self {
        Adapters { default, by_tool: BTreeMap::new() }
    }

    pub fn with(mut self, tool: Tool, adapter: Arc<dyn ToolAdapter>) -> Self {
        self.by_tool.insert(tool, adapter);
        self
    }

    pub fn get(&self, tool: Tool) -> Arc<dyn ToolAdapter> {
        self.by_tool.get(&tool).unwrap_or(&self.default).clone()
    }
}

/// Shared, run-independent pieces.
#[derive(Clone)]
pub struct Executor {
    pub db: Arc<StructDb>,
    pub rules: Arc<RuleSet>,
    pub adapters: Adapters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub run_id: String,
    pub total_cores: u32,
    pub retry: RetryPolicy,
    /// Workdirs and `events.log` go under `<runs_dir>/<run_id>/`.
    pub runs_dir: Option<PathBuf>,
    pub evidence: Vec<RetrievalHit>,
    /// Rule ids treated as confirmed from the start.
    pub preapproved: BTreeSet<String>,
}

impl RunConfig {
    pub fn new(run_id: &str, total_cores: u32) -> Self {
        RunConfig {
            run_id: run_id.to_string(),
            total_cores,
            retry: RetryPolicy::default(),
            runs_dir: None,
            evidence: Vec::new(),
            preapproved: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub job_id: String,
    pub tool: Tool,
    pub status: JobStatus,
    pub history: Vec<JobStatus>,
    /// Launches so far.
    pub attempts: u32,
    pub materials: Vec<String>,
    /// Every deck version, oldest first; the last one ran (or would have).
    pub decks: Vec<InputDeck>,
    pub findings: Vec<Finding>,
    pub corrections: Vec<Correction>,
    pub pending: Vec<Correction>,
    pub recoveries: Vec<RecoveryAction>,
    pub diagnoses: Vec<FailureDiagnosis>,
    pub outputs: BTreeMap<String, Measurement>,
    pub artifacts: BTreeMap<String, Vec<String>>,
    pub skipped: bool,
    pub abort_reason: Option<String>,
}

impl JobRecord {
    fn new(job_id: &str, tool: Tool, materials: Vec<String>) -> Self {
        JobRecord {
            job_id: job_id.to_string(),
            tool,
            status: JobStatus::Pending,
            history: vec![JobStatus::Pending],
            attempts: 0,
            materials,
            decks: Vec::new(),
            findings: Vec::new(),
            corrections: Vec::new(),
            pending: Vec::new(),
            recoveries: Vec::new(),
            diagnoses: Vec::new(),
            outputs: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            skipped: false,
            abort_reason: None,
        }
    }

    pub fn deck(&self) -> Option<&InputDeck> {
        self.decks.last()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunOutcome {
    Running,
    Completed,
    Aborted { job_id: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub plan: Plan,
    pub total_cores: u32,
    pub jobs: BTreeMap<String, JobRecord>,
    pub events: Vec<ExecutionEvent>,
    pub started_ms: u64,
    pub finished_ms: Option<u64>,
    pub outcome: RunOutcome,
    pub confirmed_rules: BTreeSet<String>,
    pub declined_rules: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingConfirmation {
    pub job_id: String,
    pub correction: Correction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub run_id: String,
    pub statuses: BTreeMap<String, JobStatus>,
    pub running: usize,
    /// Terminal jobs over all jobs, in percent.
    pub progress: f64,
    pub awaiting: Vec<PendingConfirmation>,
    pub outcome: RunOutcome,
}

impl RunRecord {
    pub fn new(run_id: &str, plan: &Plan, total_cores: u32) -> Self {
        let jobs = plan.jobs().map(|j| (j.job_id.clone(), JobRecord::new(&j.job_id, j.tool, j.materials.clone()))).collect();
        RunRecord {
            run_id: run_id.to_string(),
            plan: plan.clone(),
            total_cores,
            jobs,
            events: Vec::new(),
            started_ms: run::now_ms(),
            finished_ms: None,
            outcome: RunOutcome::Running,
            confirmed_rules: BTreeSet::new(),
            declined_rules: BTreeSet::new(),
        }
    }

    pub fn job(&self, id: &str) -> Option<&JobRecord> {
        self.jobs.get(id)
    }

    pub fn is_terminal(&self) -> bool {
        self.jobs.values().all(|j| j.status.is_terminal())
    }

    pub fn awaiting(&self) -> Vec<PendingConfirmation> {
        self.jobs
            .values()
            .flat_map(|j| j.pending.iter().map(|c| PendingConfirmation { job_id: j.job_id.clone(), correction: c.clone() }))
            .collect()
    }

    pub fn snapshot(&self) -> Snapshot {
        let statuses: BTreeMap<String, JobStatus> = self.jobs.iter().map(|(k, j)| (k.clone(), j.status)).collect();
        let terminal = statuses.values().filter(|s| s.is_terminal()).count();
        Snapshot {
            run_id: self.run_id.clone(),
            running: statuses.values().filter(|s| **s == JobStatus::Running).count(),
            progress: if statuses.is_empty() { 100.0 } else { 100.0 * terminal as f64 / statuses.len() as f64 },
            statuses,
            awaiting: self.awaiting(),
            outcome: self.outcome.clone(),
        }
    }

    pub fn events_after(&self, after: Option<u64>) -> &[ExecutionEvent] {
        let from = after.map_or(0, |s| (s + 1).min(self.events.len() as u64) as usize);
        &self.events[from..]
    }

    /// Err(RunAborted) unless the run completed.
    pub fn into_result(self) -> Result<RunRecord, ExecError> {
        match self.outcome.clone() {
            RunOutcome::Aborted { job_id, reason } => Err(ExecError::RunAborted { job_id, reason, record: Box::new(self) }),
            _ => Ok(self),
        }
    }
}

#[derive(Debug)]
enum Msg {
    Done { job_id: String, result: Result<crate::toolkit::ToolRun, crate::toolkit::ToolError> },
    Decision { rule_ids: Vec<String>, accept: bool },
}

struct Shared {
    record: Mutex<RunRecord>,
    changed: Condvar,
}

/// Live view of a run started with [`start_run`].
#[derive(Clone)]
pub struct RunHandle {
    pub run_id: String,
    shared: Arc<Shared>,
    inbox: Sender<Msg>,
    thread: Arc<Mutex<Option<JoinHandle<()>>>>,
}

impl RunHandle {
    pub fn record(&self) -> RunRecord {
        self.shared.record.lock().unwrap().clone()
    }

    pub fn snapshot(&self) -> Snapshot {
        self.shared.record.lock().unwrap().snapshot()
    }

    pub fn events_after(&self, after: Option<u64>) -> Vec<ExecutionEvent> {
        self.shared.record.lock().unwrap().events_after(after).to_vec()
    }

    /// Blocks until events beyond `after` exist, the run ends, or `timeout`.
    pub fn wait_events(&self, after: Option<u64>, timeout: Duration) -> Vec<ExecutionEvent> {
        let guard = self.shared.record.lock().unwrap();
        let (guard, _) = self
            .shared
            .changed
            .wait_timeout_while(guard, timeout, |r| r.events_after(after).is_empty() && r.outcome == RunOutcome::Running)
            .unwrap();
        guard.events_after(after).to_vec()
    }

    pub fn is_finished(&self) -> bool {
        self.shared.record.lock().unwrap().outcome != RunOutcome::Running
    }

    /// Accepts or rejects pending physics changes by rule id.
    pub fn decide(&self, rule_ids: &[String], accept: bool) -> Result<(), ExecError> {
        {
            let r = self.shared.record.lock().unwrap();
            let awaiting = r.awaiting();
            if rule_ids.is_empty() {
                return Err(ExecError::NotAwaiting(String::new()));
            }
            if let Some(id) = rule_ids.iter().find(|id| !awaiting.iter().any(|p| &p.correction.rule_id == *id)) {
                return Err(ExecError::NotAwaiting(id.clone()));
            }
        }
        self.inbox
            .send(Msg::Decision { rule_ids: rule_ids.to_vec(), accept })
            .map_err(|_| ExecError::Thread("run already finished".into()))
    }

    /// Waits for the run to end and returns its record.
    pub fn wait(&self) -> Result<RunRecord, ExecError> {
        if let Some(t) = self.thread.lock().unwrap().take() {
            t.join().map_err(|_| ExecError::Thread("coordinator panicked".into()))?;
        }
        let guard = self.shared.record.lock().unwrap();
        let guard = self.shared.changed.wait_while(guard, |r| r.outcome == RunOutcome::Running).unwrap();
        guard.clone().into_result()
    }
}

/// Runs on a background thread; parked jobs wait for [`RunHandle::decide`].
pub fn start_run(exec: &Executor, plan: &Plan, cfg: RunConfig) -> Result<RunHandle, ExecError> {
    run::start(exec, plan, cfg, true)
}

/// Blocks until the run ends. Physics changes not in
/// `cfg.preapproved` are treated as declined once nothing else can run.
pub fn run_plan(exec: &Executor, plan: &Plan, cfg: RunConfig) -> Result<RunRecord, ExecError> {
    run::start(exec, plan, cfg, false)?.wait()
}

//! The coordinator: sole writer of the run record.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};

use super::{
    schedule, Allocation, EventKind, ExecError, ExecutionEvent, Executor, Msg, ResourcePool, RunConfig, RunHandle, RunOutcome, RunRecord,
    Shared, DECLINED,
};
use crate::guard::{
    correct_until_fixpoint, inspect_log, plan_recovery, system_flags, validate_deck, ApplyOutcome, Correction, FailureCategory,
    FailureDiagnosis, LogVerdict, ProposedAction, RecoveryAction,
};
use crate::inputgen::{generate_deck, InputDeck, Provenance};
use crate::intent::SettingValue;
use crate::planner::{Job, JobStatus, Param, ParamSource, Plan, Tool};
use crate::toolkit::{Exit, ToolError, ToolRun};
use crate::units::{format_number, Measurement};

pub(super) fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

pub(super) fn start(exec: &Executor, plan: &Plan, cfg: RunConfig, interactive: bool) -> Result<RunHandle, ExecError> {
    let pool = ResourcePool::new(cfg.total_cores)?;
    plan.validate().map_err(|e| ExecError::Config(e.to_string()))?;
    let run_dir = cfg.runs_dir.as_ref().map(|d| d.join(&cfg.run_id));
    let log = match &run_dir {
        Some(d) => {
            std::fs::create_dir_all(d).map_err(|e| ExecError::Config(format!("{}: {e}", d.display())))?;
            Some(File::create(d.join("events.log")).map_err(|e| ExecError::Config(e.to_string()))?)
        }
        None => None,
    };
    let shared = Arc::new(Shared {
        record: Mutex::new(RunRecord::new(&cfg.run_id, plan, cfg.total_cores)),
        changed: std::sync::Condvar::new(),
    });
    let (tx, rx) = channel();
    let mut c = Coordinator {
        exec: exec.clone(),
        plan: plan.clone(),
        preds: plan.predecessors(),
        pool,
        queue: Vec::new(),
        running: 0,
        shared: shared.clone(),
        tx: tx.clone(),
        run_dir,
        log,
        interactive,
        cfg,
    };
    let thread = std::thread::Builder::new()
        .name(format!("run-{}", c.cfg.run_id))
        .spawn(move || c.run(rx))
        .map_err(|e| ExecError::Thread(e.to_string()))?;
    Ok(RunHandle { run_id: plan_run_id(&shared), shared, inbox: tx, thread: Arc::new(Mutex::new(Some(thread))) })
}

fn plan_run_id(shared: &Shared) -> String {
    shared.record.lock().unwrap().run_id.clone()
}

struct Coordinator {
    exec: Executor,
    cfg: RunConfig,
    plan: Plan,
    preds: BTreeMap<String, BTreeSet<String>>,
    pool: ResourcePool,
    /// (ready seq, job id, cores requested)
    queue: Vec<(u64, String, u32)>,
    running: usize,
    shared: Arc<Shared>,
    tx: Sender<Msg>,
    run_dir: Option<PathBuf>,
    log: Option<File>,
    interactive: bool,
}

impl Coordinator {
    fn with<T>(&self, f: impl FnOnce(&mut RunRecord) -> T) -> T {
        let mut r = self.shared.record.lock().unwrap();
        let out = f(&mut r);
        self.shared.changed.notify_all();
        out
    }

    fn emit(&mut self, job_id: &str, kind: EventKind, payload: Value) -> u64 {
        let e = self.with(|r| {
            let e = ExecutionEvent { seq: r.events.len() as u64, time_ms: now_ms(), job_id: job_id.to_string(), kind, payload };
            r.events.push(e.clone());
            e
        });
        if let Some(f) = self.log.as_mut() {
            // a broken log file must not stop the run; the record keeps everything
            let _ = writeln!(f, "{}", e.to_line()).and_then(|_| f.flush());
        }
        e.seq
    }

    fn status(&self, id: &str) -> JobStatus {
        self.with(|r| r.jobs[id].status)
    }

    fn set_status(&self, id: &str, next: JobStatus) {
        self.with(|r| {
            let j = r.jobs.get_mut(id).expect("job exists");
            debug_assert!(j.status.can_become(next), "{id}: {:?} -> {next:?}", j.status);
            j.status = next;
            j.history.push(next);
        });
    }

    fn job(&self, id: &str) -> Job {
        self.plan.job(id).expect("job exists").clone()
    }

    fn run(&mut self, rx: Receiver<Msg>) {
        loop {
            self.settle();
            self.dispatch();
            if self.with(|r| r.is_terminal()) {
                break;
            }
            let parked = self.with(|r| r.jobs.values().any(|j| j.status == JobStatus::Recovering));
            let msg = if self.running == 0 && self.queue.is_empty() {
                if !parked {
                    // nothing can move; should not happen on a valid plan
                    self.abort_stuck("no runnable jobs remain");
                    continue;
                }
                if !self.interactive {
                    self.decline_all("confirmation not granted");
                    continue;
                }
                match self.wait_for_decision(&rx) {
                    Some(m) => m,
                    None => {
                        self.decline_all("run handle dropped before confirmation");
                        continue;
                    }
                }
            } else {
                match rx.recv() {
                    Ok(m) => m,
                    Err(_) => break,
                }
            };
            match msg {
                Msg::Done { job_id, result } => self.finish(&job_id, result),
                Msg::Decision { rule_ids, accept } => self.decide(&rule_ids, accept),
            }
        }
        self.with(|r| {
            r.finished_ms = Some(now_ms());
            if r.outcome == RunOutcome::Running {
                r.outcome = RunOutcome::Completed;
            }
        });
        if let Some(d) = &self.run_dir {
            let json = self.with(|r| serde_json::to_string_pretty(&*r).expect("record serializes"));
            let _ = std::fs::write(d.join("record.json"), json);
        }
    }

    fn wait_for_decision(&self, rx: &Receiver<Msg>) -> Option<Msg> {
        loop {
            match rx.recv_timeout(Duration::from_millis(50)) {
                Ok(m) => return Some(m),
                Err(RecvTimeoutError::Timeout) => {
                    // only the coordinator still holds the record: nobody can answer
                    if Arc::strong_count(&self.shared) == 1 {
                        return None;
                    }
                }
                Err(RecvTimeoutError::Disconnected) => return None,
            }
        }
    }

    /// Fails jobs behind failed predecessors and prepares newly ready ones,
    /// until nothing changes.
    fn settle(&mut self) {
        loop {
            let statuses: BTreeMap<String, JobStatus> = self.with(|r| r.jobs.iter().map(|(k, j)| (k.clone(), j.status)).collect());
            let mut changed = false;
            for (id, st) in &statuses {
                if *st != JobStatus::Pending {
                    continue;
                }
                let preds = &self.preds[id];
                if let Some(p) = preds.iter().find(|p| statuses[*p] == JobStatus::Failed) {
                    let reason = format!("upstream {p} failed");
                    self.set_status(id, JobStatus::Failed);
                    self.abort(id, &reason, false);
                    changed = true;
                } else if preds.iter().all(|p| statuses[p] == JobStatus::Succeeded) {
                    self.prepare(id);
                    changed = true;
                }
            }
            if !changed {
                return;
            }
        }
    }

    fn abort(&mut self, id: &str, reason: &str, root: bool) {
        self.emit(id, EventKind::Aborted, json!({ "reason": reason }));
        self.with(|r| {
            r.jobs.get_mut(id).unwrap().abort_reason = Some(reason.to_string());
            if root && r.outcome == RunOutcome::Running {
                r.outcome = RunOutcome::Aborted { job_id: id.to_string(), reason: reason.to_string() };
            }
        });
    }

    fn fail(&mut self, id: &str, reason: &str) {
        self.set_status(id, JobStatus::Failed);
        self.abort(id, reason, true);
    }

    fn abort_stuck(&mut self, reason: &str) {
        let open: Vec<String> = self.with(|r| r.jobs.values().filter(|j| !j.status.is_terminal()).map(|j| j.job_id.clone()).collect());
        for id in open {
            self.fail(&id, reason);
        }
    }

    fn decline_all(&mut self, reason: &str) {
        let parked: Vec<String> =
            self.with(|r| r.jobs.values().filter(|j| j.status == JobStatus::Recovering).map(|j| j.job_id.clone()).collect());
        for id in parked {
            self.with(|r| r.jobs.get_mut(&id).unwrap().pending.clear());
            self.fail(&id, reason);
        }
    }

    fn enqueue(&mut self, id: &str, cores: u32) {
        let seq = self.emit(id, EventKind::Enqueued, json!({ "cores_requested": cores }));
        self.queue.push((seq, id.to_string(), cores));
    }

    /// Pending -> Ready: binds run-time inputs, builds and guards the deck.
    fn prepare(&mut self, id: &str) {
        self.set_status(id, JobStatus::Ready);
        let mut job = self.job(id);
        if job.tool == Tool::Report {
            self.enqueue(id, job.cores_requested);
            return;
        }
        if let Some(rank) = job.shortlist_rank {
            match self.shortlist_entry(id, rank) {
                Ok(Some(m)) => job.materials = vec![m],
                Ok(None) => return self.skip(id, rank),
                Err(e) => return self.fail(id, &e),
            }
        }
        if let Err(e) = self.bind_inputs(&mut job) {
            return self.fail(id, &e);
        }
        self.with(|r| r.jobs.get_mut(id).unwrap().materials = job.materials.clone());
        let deck = match generate_deck(&job, &self.exec.db, self.plan.intent.reference_settings.as_ref(), &self.cfg.evidence) {
            Ok(d) => d,
            Err(e) => return self.fail(id, &e.to_string()),
        };
        let sys = system_flags(&self.exec.db, &deck);
        let findings = validate_deck(&deck, sys, &self.exec.rules);
        for f in &findings {
            self.emit(id, EventKind::ValidationFinding, json!({ "rule_id": f.rule_id, "severity": f.severity, "text": f.text }));
        }
        self.with(|r| {
            let j = r.jobs.get_mut(id).unwrap();
            j.findings = findings;
            j.decks.push(deck.clone());
        });
        self.guard(id, &deck, job.cores_requested);
    }

    /// Correction loop on `deck`; parks the job when a physics change needs
    /// a decision.
    fn guard(&mut self, id: &str, deck: &InputDeck, cores: u32) {
        let sys = system_flags(&self.exec.db, deck);
        let confirmed: BTreeSet<String> = self.with(|r| r.confirmed_rules.clone()).union(&self.cfg.preapproved).cloned().collect();
        match correct_until_fixpoint(deck, sys, &self.exec.rules, &confirmed) {
            Err(e) => self.fail(id, &e.to_string()),
            Ok(outcome) => {
                self.record_corrections(id, outcome.applied());
                if outcome.deck() != deck {
                    let d = outcome.deck().clone();
                    self.with(|r| r.jobs.get_mut(id).unwrap().decks.push(d));
                }
                match outcome {
                    ApplyOutcome::Applied { .. } => {
                        if self.status(id) == JobStatus::Recovering {
                            self.set_status(id, JobStatus::Ready);
                        }
                        self.enqueue(id, cores);
                    }
                    ApplyOutcome::AwaitingConfirmation { pending, .. } => {
                        let rule_ids: Vec<&str> = pending.iter().map(|c| c.rule_id.as_str()).collect();
                        let changes: Vec<_> = pending.iter().flat_map(|c| c.changes.iter()).collect();
                        self.emit(id, EventKind::ConfirmationRequested, json!({ "rule_ids": rule_ids, "changes": changes }));
                        self.with(|r| r.jobs.get_mut(id).unwrap().pending = pending.clone());
                        if self.status(id) == JobStatus::Ready {
                            self.set_status(id, JobStatus::Recovering);
                        }
                    }
                }
            }
        }
    }

    fn record_corrections(&mut self, id: &str, applied: &[Correction]) {
        for c in applied {
            self.emit(
                id,
                EventKind::CorrectionApplied,
                json!({ "rule_id": c.rule_id, "severity": c.severity, "confirmed": c.confirmed, "changes": c.changes }),
            );
        }
        let applied = applied.to_vec();
        self.with(|r| r.jobs.get_mut(id).unwrap().corrections.extend(applied));
    }

    fn decide(&mut self, rule_ids: &[String], accept: bool) {
        self.with(|r| {
            for id in rule_ids {
                if accept {
                    r.confirmed_rules.insert(id.clone());
                } else {
                    r.declined_rules.insert(id.clone());
                }
            }
        });
        let parked: Vec<(String, Vec<Correction>)> = self.with(|r| {
            r.jobs
                .values()
                .filter(|j| j.status == JobStatus::Recovering && !j.pending.is_empty())
                .map(|j| (j.job_id.clone(), j.pending.clone()))
                .collect()
        });
        let (confirmed, declined) = self.with(|r| (r.confirmed_rules.clone(), r.declined_rules.clone()));
        for (id, pending) in parked {
            if pending.iter().any(|c| declined.contains(&c.rule_id)) {
                self.with(|r| r.jobs.get_mut(&id).unwrap().pending.clear());
                self.fail(&id, DECLINED);
            } else if pending.iter().all(|c| confirmed.contains(&c.rule_id)) {
                self.with(|r| r.jobs.get_mut(&id).unwrap().pending.clear());
                let deck = self.with(|r| r.jobs[&id].deck().cloned()).expect("parked job has a deck");
                let cores = self.job(&id).cores_requested;
                self.guard(&id, &deck, cores);
            }
        }
    }

    fn shortlist_entry(&self, id: &str, rank: usize) -> Result<Option<String>, String> {
        let screen = self.preds[id]
            .iter()
            .find(|p| self.plan.job(p).is_some_and(|j| j.tool == Tool::Screening))
            .ok_or_else(|| format!("{id} is bound to a shortlist but has no screening predecessor"))?;
        let list = self.with(|r| r.jobs[screen].artifacts.get("shortlist").cloned()).unwrap_or_default();
        Ok(list.get(rank - 1).cloned())
    }

    /// Shortlist slot beyond the shortlist length: succeeds without work.
    fn skip(&mut self, id: &str, rank: usize) {
        self.set_status(id, JobStatus::Running);
        self.emit(id, EventKind::Started, json!({ "cores": 0, "attempt": 0, "skipped": true }));
        let outputs = BTreeMap::from([("skipped".to_string(), Measurement::new(1.0, "count"))]);
        self.with(|r| {
            let j = r.jobs.get_mut(id).unwrap();
            j.skipped = true;
            j.outputs = outputs.clone();
            j.status = JobStatus::Succeeded;
            j.history.push(JobStatus::Succeeded);
        });
        self.emit(id, EventKind::Finished, json!({ "status": "succeeded", "skipped": true, "rank": rank, "outputs": outputs }));
    }

    fn bind_inputs(&self, job: &mut Job) -> Result<(), String> {
        for link in job.inputs.clone() {
            let v = self
                .with(|r| r.jobs.get(&link.from_job).and_then(|j| j.outputs.get(&link.metric).cloned()))
                .ok_or_else(|| format!("{} has no output `{}` for {}", link.from_job, link.metric, job.job_id))?;
            job.spec.insert(link.key, Param { value: SettingValue::Text(format_number(v.value)), source: ParamSource::Upstream });
        }
        Ok(())
    }

    fn dispatch(&mut self) {
        if self.queue.is_empty() {
            return;
        }
        let queue = std::mem::take(&mut self.queue);
        for (id, a) in schedule(&mut self.pool, &queue) {
            match a {
                Allocation::Granted(cores) => self.launch(&id, cores),
                Allocation::Deferred => self.queue.extend(queue.iter().find(|q| q.1 == id).cloned()),
            }
        }
    }

    fn launch(&mut self, id: &str, cores: u32) {
        self.set_status(id, JobStatus::Running);
        let attempt = self.with(|r| {
            let j = r.jobs.get_mut(id).unwrap();
            j.attempts += 1;
            j.attempts
        });
        self.emit(id, EventKind::Started, json!({ "cores": cores, "attempt": attempt }));
        let job = self.job(id);
        if job.tool == Tool::Report {
            let n = self.with(|r| r.jobs.values().filter(|j| j.tool != Tool::Report && j.status == JobStatus::Succeeded).count());
            let run = ToolRun {
                job_id: id.to_string(),
                deck: InputDeck::new(id, Tool::Report),
                workdir: None,
                log: String::new(),
                outputs: BTreeMap::from([("summarized".to_string(), Measurement::new(n as f64, "count"))]),
                artifacts: BTreeMap::new(),
                exit: Exit::Ok,
                duration_ms: 0,
            };
            return self.succeed(id, run);
        }
        self.running += 1;
        let deck = self.with(|r| r.jobs[id].deck().cloned()).expect("launched job has a deck");
        let adapter = self.exec.adapters.get(job.tool);
        let workdir = self.run_dir.as_ref().map(|d| d.join(id));
        let tx = self.tx.clone();
        let job_id = id.to_string();
        std::thread::spawn(move || {
            let result = catch_unwind(AssertUnwindSafe(|| adapter.execute(&deck, workdir.as_deref()))).unwrap_or_else(|p| {
                let msg = p.downcast_ref::<&str>().map(|s| s.to_string()).or_else(|| p.downcast_ref::<String>().cloned());
                Ok(ToolRun {
                    job_id: deck.job_id.clone(),
                    deck: deck.clone(),
                    workdir: workdir.clone(),
                    log: format!("adapter panicked at {}\n", msg.unwrap_or_default()),
                    outputs: BTreeMap::new(),
                    artifacts: BTreeMap::new(),
                    exit: Exit::Failed,
                    duration_ms: 0,
                })
            });
            let _ = tx.send(Msg::Done { job_id, result });
        });
    }

    fn succeed(&mut self, id: &str, run: ToolRun) {
        let cores = self.pool.release(id);
        self.with(|r| {
            let j = r.jobs.get_mut(id).unwrap();
            j.outputs = run.outputs.clone();
            j.artifacts = run.artifacts.clone();
            j.status = JobStatus::Succeeded;
            j.history.push(JobStatus::Succeeded);
        });
        self.emit(
            id,
            EventKind::Finished,
            json!({ "status": "succeeded", "cores": cores, "outputs": run.outputs, "duration_ms": run.duration_ms }),
        );
    }

    fn finish(&mut self, id: &str, result: Result<ToolRun, ToolError>) {
        self.running -= 1;
        let run = match result {
            Ok(run) => run,
            Err(e) => {
                // deterministic adapter errors do not improve on retry
                let cores = self.pool.release(id);
                let diag = FailureDiagnosis {
                    category: FailureCategory::InputError,
                    evidence: e.to_string(),
                    proposed_action: ProposedAction::Abort,
                };
                self.with(|r| r.jobs.get_mut(id).unwrap().diagnoses.push(diag.clone()));
                self.set_status(id, JobStatus::Failed);
                self.emit(id, EventKind::Finished, json!({ "status": "failed", "cores": cores, "diagnosis": diag }));
                return self.abort(id, &e.to_string(), true);
            }
        };
        let verdict = if run.exit == Exit::Ok { inspect_log(&run.log, run.deck.tool) } else { failed_verdict(&run) };
        let diag = match verdict {
            LogVerdict::Success => return self.succeed(id, run),
            LogVerdict::Failure(d) => d,
        };
        let cores = self.pool.release(id);
        self.set_status(id, JobStatus::Failed);
        let attempt = self.with(|r| {
            let j = r.jobs.get_mut(id).unwrap();
            j.diagnoses.push(diag.clone());
            j.recoveries.len() as u32 + 1
        });
        self.emit(id, EventKind::Finished, json!({ "status": "failed", "cores": cores, "diagnosis": diag }));
        let action = plan_recovery(&diag, &run.deck, attempt, self.cfg.retry);
        if let RecoveryAction::Abort { reason, .. } = &action {
            return self.abort(id, reason, true);
        }
        let mut deck = run.deck.clone();
        if let RecoveryAction::Rewrite { changes, .. } = &action {
            for c in changes {
                // recovery keys come from the deck grammar itself
                let _ = deck.set(&c.key, &c.after, Provenance::Correction);
            }
        }
        self.emit(id, EventKind::RecoveryScheduled, json!({ "attempt": attempt, "action": action }));
        self.with(|r| {
            let j = r.jobs.get_mut(id).unwrap();
            j.recoveries.push(action.clone());
            if &deck != j.deck().unwrap() {
                j.decks.push(deck);
            }
        });
        self.set_status(id, JobStatus::Recovering);
        self.set_status(id, JobStatus::Ready);
        let req = self.job(id).cores_requested;
        self.enqueue(id, req);
    }
}

/// A non-zero exit is a failure even when the log looks clean.
fn failed_verdict(run: &ToolRun) -> LogVerdict {
    match inspect_log(&run.log, run.deck.tool) {
        LogVerdict::Success => LogVerdict::Failure(FailureDiagnosis {
            category: FailureCategory::Unknown,
            evidence: "adapter reported failure".into(),
            proposed_action: ProposedAction::Retry,
        }),
        v => v,
    }
}

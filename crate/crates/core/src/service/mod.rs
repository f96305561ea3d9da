//! Sessions, the run store and the programmatic API behind the CLI and
//! the HTTP server.

pub mod store;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use store::{IndexEntry, RunStore};

use crate::executor::{events::parse_log, start_run, Adapters, ExecError, ExecutionEvent, Executor, PendingConfirmation, RunConfig, RunHandle, RunRecord, Snapshot};
use crate::guard::RuleSet;
use crate::intent::{Attachment, ClarificationRequest, IntentError, IntentParser, ParseOutcome, PartialIntent, Query, RuleEngine};
use crate::planner::{build_plan, DefaultTable, Plan, PlannerError, TemplateRegistry, Tool};
use crate::reporting::{compare_to_reference, summarize_run, BenchmarkCase, BenchmarkInput, BenchmarkRow, Report, ReportError};
use crate::retrieval::{build_from_corpus, load_index, search, ChunkParams, HashEmbedder, RetrievalHit, VectorIndex, DEFAULT_DIMS};
use crate::screening::{configure_funnel, parse_descriptor_table, run_funnel, DescriptorRow, Downstream, FunnelReport};
use crate::structdb::StructDb;
use crate::toolkit::{Mode, ReplayStore, Toolkit};

pub const API_VERSION: u32 = 1;
/// Objective used when a funnel is requested for a bare database name.
pub const DEFAULT_OBJECTIVE: &str = "ch4-uptake";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Intent(#[from] IntentError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error("session `{0}` has no pending clarification")]
    NoPendingClarification(String),
    #[error("no job awaits confirmation of `{0}`")]
    NotAwaiting(String),
    #[error("unknown run `{0}`")]
    UnknownRun(String),
    #[error("unknown screening `{0}`")]
    UnknownScreening(String),
    #[error("screening: {0}")]
    Screening(String),
    #[error("executor: {0}")]
    Exec(String),
    #[error("store: {0}")]
    Store(String),
    #[error("fixtures: {0}")]
    Fixtures(String),
    #[error("bad request: {0}")]
    BadRequest(String),
}

impl ServiceError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::Intent(IntentError::EmptyQuery) => "empty_query",
            ServiceError::Intent(IntentError::UnrecognizedTask) => "unrecognized_task",
            ServiceError::Intent(IntentError::SessionMismatch { .. }) => "session_mismatch",
            ServiceError::Planner(_) => "planning_failed",
            ServiceError::NoPendingClarification(_) => "no_pending_clarification",
            ServiceError::NotAwaiting(_) => "not_awaiting",
            ServiceError::UnknownRun(_) => "unknown_run",
            ServiceError::UnknownScreening(_) => "unknown_screening",
            ServiceError::Screening(_) => "screening_failed",
            ServiceError::Exec(_) => "execution_failed",
            ServiceError::Store(_) => "store_failed",
            ServiceError::Fixtures(_) => "fixtures_failed",
            ServiceError::BadRequest(_) => "bad_request",
        }
    }

    pub fn http_status(&self) -> u16 {
        match self {
            ServiceError::Intent(IntentError::EmptyQuery) | ServiceError::BadRequest(_) => 400,
            ServiceError::UnknownRun(_) | ServiceError::UnknownScreening(_) => 404,
            ServiceError::NoPendingClarification(_) | ServiceError::NotAwaiting(_) | ServiceError::Intent(IntentError::SessionMismatch { .. }) => 409,
            ServiceError::Intent(_) | ServiceError::Planner(_) | ServiceError::Screening(_) => 422,
            ServiceError::Exec(_) | ServiceError::Store(_) | ServiceError::Fixtures(_) => 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub version: u32,
    pub code: String,
    pub message: String,
}

impl From<&ServiceError> for ErrorBody {
    fn from(e: &ServiceError) -> Self {
        ErrorBody { version: API_VERSION, code: e.code().to_string(), message: e.to_string() }
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub fixtures: PathBuf,
    pub runs_dir: PathBuf,
    pub cores: u32,
    pub mode: Mode,
    pub seed: u64,
    /// Plans with at most this many jobs are answered in the same call.
    pub sync_jobs: usize,
    /// Retrieval hits passed to the run as evidence.
    pub evidence_k: usize,
}

impl ServiceConfig {
    pub fn new(fixtures: &Path, runs_dir: &Path) -> Self {
        ServiceConfig {
            fixtures: fixtures.to_path_buf(),
            runs_dir: runs_dir.to_path_buf(),
            cores: 8,
            mode: Mode::Replay,
            seed: 42,
            sync_jobs: 2,
            evidence_k: 3,
        }
    }
}

/// Everything loaded from the fixture root.
pub struct Fixtures {
    pub db: StructDb,
    pub replay: ReplayStore,
    pub tables: BTreeMap<String, Vec<DescriptorRow>>,
    pub index: VectorIndex,
}

impl Fixtures {
    /// `structures/`, `molecules/`, `forcefields/`, `replay.tsv`,
    /// `screening/*.tsv` and either a saved `index/` or a `corpus/`.
    pub fn load(root: &Path) -> Result<Fixtures, ServiceError> {
        let fx = |e: String| ServiceError::Fixtures(e);
        let db = StructDb::load(root).map_err(|e| fx(e.to_string()))?;
        let replay_path = root.join("replay.tsv");
        let replay = if replay_path.exists() { ReplayStore::load(&replay_path).map_err(|e| fx(e.to_string()))? } else { ReplayStore::new() };
        let mut tables = BTreeMap::new();
        let dir = root.join("screening");
        if dir.is_dir() {
            let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
                .map_err(|e| fx(format!("{}: {e}", dir.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "tsv"))
                .collect();
            paths.sort();
            for p in paths {
                let text = std::fs::read_to_string(&p).map_err(|e| fx(format!("{}: {e}", p.display())))?;
                let rows = parse_descriptor_table(&text).map_err(|e| fx(format!("{}: {e}", p.display())))?;
                let name = p.file_stem().unwrap().to_string_lossy().into_owned();
                tables.insert(name, rows);
            }
        }
        let embedder = HashEmbedder::default();
        let index = if root.join("index").join("index.vec").exists() {
            load_index(&root.join("index")).map_err(|e| fx(e.to_string()))?
        } else if root.join("corpus").is_dir() {
            match build_from_corpus(&root.join("corpus"), &ChunkParams::default(), &embedder, 200, 512) {
                Ok(i) => i,
                Err(crate::retrieval::RetrievalError::EmptyIndex) => VectorIndex::empty(DEFAULT_DIMS),
                Err(e) => return Err(fx(e.to_string())),
            }
        } else {
            VectorIndex::empty(DEFAULT_DIMS)
        };
        Ok(Fixtures { db, replay, tables, index })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub query: String,
    pub response: String,
    pub at_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub turns: Vec<Turn>,
    pub pending: Option<PartialIntent>,
    pub runs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QueryResponse {
    Clarification { session_id: String, clarification: ClarificationRequest },
    RunStarted { session_id: String, run_id: String, plan_id: String, jobs: usize, awaiting: Vec<PendingConfirmation> },
    Report { session_id: String, run_id: String, report: Report },
}

impl QueryResponse {
    pub fn kind(&self) -> &'static str {
        match self {
            QueryResponse::Clarification { .. } => "clarification",
            QueryResponse::RunStarted { .. } => "run_started",
            QueryResponse::Report { .. } => "report",
        }
    }

    pub fn run_id(&self) -> Option<&str> {
        match self {
            QueryResponse::Clarification { .. } => None,
            QueryResponse::RunStarted { run_id, .. } | QueryResponse::Report { run_id, .. } => Some(run_id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunView {
    pub run_id: String,
    pub session_id: String,
    pub plan: Plan,
    pub snapshot: Snapshot,
    pub finished: bool,
    /// Set when the store holds a run that never finished (process exit).
    pub interrupted: bool,
    pub report: Option<Report>,
    pub error: Option<String>,
}

struct Finished {
    record: RunRecord,
    report: Report,
    error: Option<String>,
}

struct RunSlot {
    session_id: String,
    handle: Option<RunHandle>,
    /// Plan and events of a run found unfinished in the store.
    interrupted: Option<RunRecord>,
    done: Mutex<Option<Arc<Finished>>>,
    cv: Condvar,
}

impl RunSlot {
    fn finished(&self) -> Option<Arc<Finished>> {
        self.done.lock().unwrap().clone()
    }

    fn wait_finished(&self, timeout: Duration) -> Option<Arc<Finished>> {
        let g = self.done.lock().unwrap();
        let (g, _) = self.cv.wait_timeout_while(g, timeout, |d| d.is_none()).unwrap();
        g.clone()
    }
}

fn now_ms() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

fn finish(record: RunRecord, error: Option<String>) -> Finished {
    let intent = record.plan.intent.clone();
    let report = match summarize_run(&record, &intent) {
        Ok(r) => r,
        Err(ReportError::IncompleteRun { partial, .. }) => *partial,
        Err(e) => unreachable!("summarize_run only fails with IncompleteRun: {e}"),
    };
    Finished { record, report, error }
}

pub struct Service {
    cfg: ServiceConfig,
    resolver: StructDb,
    exec: Executor,
    parser: Box<dyn IntentParser + Send + Sync>,
    defaults: DefaultTable,
    templates: TemplateRegistry,
    tables: Arc<BTreeMap<String, Vec<DescriptorRow>>>,
    index: VectorIndex,
    embedder: HashEmbedder,
    store: RunStore,
    sessions: Mutex<BTreeMap<String, SessionRecord>>,
    runs: Mutex<BTreeMap<String, Arc<RunSlot>>>,
    next_session: AtomicU64,
}

impl Service {
    pub fn open(cfg: ServiceConfig) -> Result<Arc<Service>, ServiceError> {
        let fixtures = Fixtures::load(&cfg.fixtures)?;
        Self::with_fixtures(cfg, fixtures)
    }

    pub fn with_fixtures(cfg: ServiceConfig, fx: Fixtures) -> Result<Arc<Service>, ServiceError> {
        if cfg.cores == 0 {
            return Err(ServiceError::BadRequest("cores must be >= 1".into()));
        }
        // shortlist rows become descriptor-only structures for the tools;
        // the resolver keeps to the curated records
        let mut exec_db = fx.db.clone();
        for rows in fx.tables.values() {
            for r in rows {
                if exec_db.structure(&r.structure_id).is_none() {
                    exec_db.insert_structure(r.to_record());
                }
            }
        }
        let exec_db = Arc::new(exec_db);
        let tables = Arc::new(fx.tables);
        let tk = Toolkit::new(cfg.mode, exec_db.clone(), Arc::new(fx.replay)).with_tables(tables.clone()).with_seed(cfg.seed);
        let exec = Executor { db: exec_db, rules: Arc::new(RuleSet::builtin()), adapters: Adapters::new(Arc::new(tk)) };
        let store = RunStore::open(&cfg.runs_dir)?;
        let svc = Service {
            embedder: HashEmbedder { dims: fx.index.dims() },
            cfg,
            resolver: fx.db,
            exec,
            parser: Box::new(RuleEngine),
            defaults: DefaultTable::builtin(),
            templates: TemplateRegistry::builtin(),
            tables,
            index: fx.index,
            store,
            sessions: Mutex::new(BTreeMap::new()),
            runs: Mutex::new(BTreeMap::new()),
            next_session: AtomicU64::new(1),
        };
        svc.reload()?;
        Ok(Arc::new(svc))
    }

    /// Swaps the executor adapters, e.g. to plug in an external tool.
    pub fn set_adapters(&mut self, adapters: Adapters) {
        self.exec.adapters = adapters;
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.cfg
    }

    pub fn store(&self) -> &RunStore {
        &self.store
    }

    pub fn index(&self) -> &VectorIndex {
        &self.index
    }

    fn reload(&self) -> Result<(), ServiceError> {
        let mut runs = self.runs.lock().unwrap();
        for e in self.store.entries()? {
            let slot = match self.store.load_record(&e.run_id)? {
                Some(record) => {
                    let mut f = finish(record, None);
                    if let Some(stored) = self.store.load_report(&e.run_id)? {
                        f.report = stored;
                    }
                    if let crate::executor::RunOutcome::Aborted { job_id, reason } = &f.record.outcome {
                        f.error = Some(format!("run aborted: job {job_id}: {reason}"));
                    }
                    RunSlot {
                        session_id: e.session_id.clone(),
                        handle: None,
                        interrupted: None,
                        done: Mutex::new(Some(Arc::new(f))),
                        cv: Condvar::new(),
                    }
                }
                None => {
                    let dir = self.store.run_dir(&e.run_id);
                    let plan_text = std::fs::read_to_string(dir.join("plan.json")).map_err(|err| ServiceError::Store(err.to_string()))?;
                    let plan = Plan::from_json(&plan_text)?;
                    let mut rec = RunRecord::new(&e.run_id, &plan, self.cfg.cores);
                    if let Ok(log) = std::fs::read_to_string(dir.join("events.log")) {
                        rec.events = parse_log(&log).map_err(|err| ServiceError::Store(format!("{}: {err}", e.run_id)))?;
                    }
                    RunSlot { session_id: e.session_id.clone(), handle: None, interrupted: Some(rec), done: Mutex::new(None), cv: Condvar::new() }
                }
            };
            runs.insert(e.run_id, Arc::new(slot));
        }
        Ok(())
    }

    fn new_session_id(&self) -> String {
        let sessions = self.sessions.lock().unwrap();
        loop {
            let id = format!("s-{:04}", self.next_session.fetch_add(1, Ordering::SeqCst));
            if !sessions.contains_key(&id) {
                return id;
            }
        }
    }

    pub fn session(&self, id: &str) -> Option<SessionRecord> {
        self.sessions.lock().unwrap().get(id).cloned()
    }

    fn record_turn(&self, sid: &str, query: &str, response: &str) {
        let mut s = self.sessions.lock().unwrap();
        let rec = s.entry(sid.to_string()).or_insert_with(|| SessionRecord { session_id: sid.to_string(), ..Default::default() });
        rec.turns.push(Turn { query: query.to_string(), response: response.to_string(), at_ms: now_ms() });
    }

    /// New query in a session (a fresh session when `session_id` is None).
    pub fn submit_query(&self, session_id: Option<&str>, text: &str, attachments: &[Attachment]) -> Result<QueryResponse, ServiceError> {
        let sid = match session_id {
            Some(s) if !s.trim().is_empty() => s.to_string(),
            _ => self.new_session_id(),
        };
        let q = Query { session_id: sid.clone(), text: text.to_string(), attachments: attachments.to_vec() };
        let outcome = self.parser.parse_query(&q, &self.resolver);
        self.proceed(&sid, text, outcome)
    }

    pub fn respond_clarification(&self, session_id: &str, text: &str, attachments: &[Attachment]) -> Result<QueryResponse, ServiceError> {
        let partial = self
            .sessions
            .lock()
            .unwrap()
            .get(session_id)
            .and_then(|s| s.pending.clone())
            .ok_or_else(|| ServiceError::NoPendingClarification(session_id.to_string()))?;
        let q = Query { session_id: session_id.to_string(), text: text.to_string(), attachments: attachments.to_vec() };
        let outcome = self.parser.merge_clarification(&partial, &q, &self.resolver);
        self.proceed(session_id, text, outcome)
    }

    fn proceed(&self, sid: &str, text: &str, outcome: Result<ParseOutcome, IntentError>) -> Result<QueryResponse, ServiceError> {
        let outcome = match outcome {
            Ok(o) => o,
            Err(e) => {
                self.record_turn(sid, text, "error");
                return Err(e.into());
            }
        };
        let resp = match outcome {
            ParseOutcome::Clarification(c) => {
                {
                    let mut s = self.sessions.lock().unwrap();
                    let rec = s.entry(sid.to_string()).or_insert_with(|| SessionRecord { session_id: sid.to_string(), ..Default::default() });
                    rec.pending = Some(c.partial.clone());
                }
                Ok(QueryResponse::Clarification { session_id: sid.to_string(), clarification: c })
            }
            ParseOutcome::Intent(intent) => {
                if let Some(s) = self.sessions.lock().unwrap().get_mut(sid) {
                    s.pending = None;
                }
                build_plan(&intent, &self.defaults, &self.templates).map_err(ServiceError::from).and_then(|plan| self.launch(sid, text, plan))
            }
        };
        self.record_turn(sid, text, resp.as_ref().map(QueryResponse::kind).unwrap_or("error"));
        resp
    }

    fn evidence(&self, text: &str) -> Vec<RetrievalHit> {
        if self.index.is_empty() || self.cfg.evidence_k == 0 {
            return Vec::new();
        }
        search(&self.index, &self.embedder, text, self.cfg.evidence_k).unwrap_or_default()
    }

    /// Starts `plan` in the session; used by queries and by `run --plan`.
    pub fn launch(&self, sid: &str, text: &str, plan: Plan) -> Result<QueryResponse, ServiceError> {
        plan.validate()?;
        let run_id = self.store.allocate()?;
        let dir = self.store.run_dir(&run_id);
        std::fs::write(dir.join("plan.json"), plan.to_json()).map_err(|e| ServiceError::Store(format!("{}: {e}", dir.display())))?;
        let mut cfg = RunConfig::new(&run_id, self.cfg.cores);
        cfg.runs_dir = Some(self.store.root().to_path_buf());
        cfg.evidence = self.evidence(text);
        let handle = start_run(&self.exec, &plan, cfg).map_err(|e| ServiceError::Exec(e.to_string()))?;
        self.store.register(&IndexEntry { run_id: run_id.clone(), session_id: sid.to_string(), plan_id: plan.plan_id.clone() })?;
        let slot = Arc::new(RunSlot {
            session_id: sid.to_string(),
            handle: Some(handle.clone()),
            interrupted: None,
            done: Mutex::new(None),
            cv: Condvar::new(),
        });
        self.runs.lock().unwrap().insert(run_id.clone(), slot.clone());
        if let Some(s) = self.sessions.lock().unwrap().get_mut(sid) {
            s.runs.push(run_id.clone());
        }
        let store_root = self.store.root().to_path_buf();
        let watcher_slot = slot.clone();
        let rid = run_id.clone();
        std::thread::spawn(move || {
            let f = match handle.wait() {
                Ok(record) => finish(record, None),
                Err(ExecError::RunAborted { record, .. }) => {
                    let msg = match &record.outcome {
                        crate::executor::RunOutcome::Aborted { job_id, reason } => format!("run aborted: job {job_id}: {reason}"),
                        _ => "run aborted".to_string(),
                    };
                    finish(*record, Some(msg))
                }
                Err(e) => finish(handle.record(), Some(e.to_string())),
            };
            // the report file is written once; a failure here leaves the
            // record on disk, from which the report is rebuilt on reload
            if let Ok(store) = RunStore::open(&store_root) {
                let _ = store.save_report(&rid, &f.report);
            }
            *watcher_slot.done.lock().unwrap() = Some(Arc::new(f));
            watcher_slot.cv.notify_all();
        });

        let jobs = plan.jobs().count();
        if jobs <= self.cfg.sync_jobs {
            let h = slot.handle.as_ref().unwrap();
            let deadline = Instant::now() + Duration::from_secs(30);
            let mut seen = None;
            while Instant::now() < deadline && !h.is_finished() && h.snapshot().awaiting.is_empty() {
                if let Some(e) = h.wait_events(seen, Duration::from_millis(50)).last() {
                    seen = Some(e.seq);
                }
            }
            if h.is_finished() {
                if let Some(f) = slot.wait_finished(Duration::from_secs(30)) {
                    return Ok(QueryResponse::Report { session_id: sid.to_string(), run_id, report: f.report.clone() });
                }
            }
        }
        let awaiting = slot.handle.as_ref().unwrap().snapshot().awaiting;
        Ok(QueryResponse::RunStarted { session_id: sid.to_string(), run_id, plan_id: plan.plan_id, jobs, awaiting })
    }

    fn slot(&self, run_id: &str) -> Result<Arc<RunSlot>, ServiceError> {
        self.runs.lock().unwrap().get(run_id).cloned().ok_or_else(|| ServiceError::UnknownRun(run_id.to_string()))
    }

    pub fn run_ids(&self) -> Vec<String> {
        self.runs.lock().unwrap().keys().cloned().collect()
    }

    fn view(&self, run_id: &str, slot: &RunSlot) -> RunView {
        if let Some(f) = slot.finished() {
            return RunView {
                run_id: run_id.to_string(),
                session_id: slot.session_id.clone(),
                plan: f.record.plan.clone(),
                snapshot: f.record.snapshot(),
                finished: true,
                interrupted: false,
                report: Some(f.report.clone()),
                error: f.error.clone(),
            };
        }
        let (record, interrupted) = match (&slot.handle, &slot.interrupted) {
            (Some(h), _) => (h.record(), false),
            (None, Some(r)) => (r.clone(), true),
            (None, None) => unreachable!("slot without handle, record or result"),
        };
        RunView {
            run_id: run_id.to_string(),
            session_id: slot.session_id.clone(),
            plan: record.plan.clone(),
            snapshot: record.snapshot(),
            finished: false,
            interrupted,
            report: None,
            error: interrupted.then(|| "run was interrupted before it finished".to_string()),
        }
    }

    pub fn get_run(&self, run_id: &str) -> Result<RunView, ServiceError> {
        let slot = self.slot(run_id)?;
        Ok(self.view(run_id, &slot))
    }

    /// Blocks until the run has finished (or `timeout` passes).
    pub fn wait_run(&self, run_id: &str, timeout: Duration) -> Result<RunView, ServiceError> {
        let slot = self.slot(run_id)?;
        if slot.handle.is_some() {
            slot.wait_finished(timeout);
        }
        Ok(self.view(run_id, &slot))
    }

    pub fn confirm_correction(&self, run_id: &str, rule_ids: &[String], accept: bool) -> Result<RunView, ServiceError> {
        let slot = self.slot(run_id)?;
        let first = || rule_ids.first().cloned().unwrap_or_default();
        let h = match &slot.handle {
            Some(h) if !h.is_finished() => h,
            _ => return Err(ServiceError::NotAwaiting(first())),
        };
        h.decide(rule_ids, accept).map_err(|e| match e {
            ExecError::NotAwaiting(r) => ServiceError::NotAwaiting(r),
            other => ServiceError::Exec(other.to_string()),
        })?;
        // return once the coordinator has acted on the decision
        let deadline = Instant::now() + Duration::from_secs(10);
        let mut seen = None;
        while Instant::now() < deadline && !h.is_finished() {
            let still = h.snapshot().awaiting.iter().any(|p| rule_ids.contains(&p.correction.rule_id));
            if !still {
                break;
            }
            if let Some(e) = h.wait_events(seen, Duration::from_millis(50)).last() {
                seen = Some(e.seq);
            }
        }
        Ok(self.view(run_id, &slot))
    }

    fn all_events(&self, slot: &RunSlot) -> Vec<ExecutionEvent> {
        if let Some(f) = slot.finished() {
            return f.record.events.clone();
        }
        match (&slot.handle, &slot.interrupted) {
            (Some(h), _) => h.events_after(None),
            (None, Some(r)) => r.events.clone(),
            (None, None) => Vec::new(),
        }
    }

    /// Events with `seq > after` (all events when `after` is None).
    pub fn stream_events(&self, run_id: &str, after: Option<u64>) -> Result<Vec<ExecutionEvent>, ServiceError> {
        let slot = self.slot(run_id)?;
        Ok(self.all_events(&slot).into_iter().filter(|e| after.is_none_or(|a| e.seq > a)).collect())
    }

    /// Like [`stream_events`](Self::stream_events) but waits up to
    /// `timeout` for something new on a live run.
    pub fn wait_events(&self, run_id: &str, after: Option<u64>, timeout: Duration) -> Result<Vec<ExecutionEvent>, ServiceError> {
        let slot = self.slot(run_id)?;
        match &slot.handle {
            Some(h) if slot.finished().is_none() => Ok(h.wait_events(after, timeout)),
            _ => self.stream_events(run_id, after),
        }
    }

    pub fn tables(&self) -> &BTreeMap<String, Vec<DescriptorRow>> {
        &self.tables
    }

    /// Runs a funnel directly over a packaged descriptor table.
    pub fn screen(&self, database: &str, objective: &str, downstream: Downstream, top_n: usize) -> Result<FunnelReport, ServiceError> {
        let rows = self.tables.get(database).ok_or_else(|| ServiceError::UnknownScreening(database.to_string()))?;
        let config = configure_funnel(objective, downstream, top_n, &[]).map_err(|e| ServiceError::Screening(e.to_string()))?;
        run_funnel(rows, &config).map_err(|e| ServiceError::Screening(e.to_string()))
    }

    /// Funnel of a screening run, or the default funnel of a packaged
    /// table when `id` names one.
    pub fn funnel(&self, id: &str) -> Result<FunnelReport, ServiceError> {
        if let Ok(slot) = self.slot(id) {
            let record = match slot.finished() {
                Some(f) => f.record.clone(),
                None => match (&slot.handle, &slot.interrupted) {
                    (Some(h), _) => h.record(),
                    (None, Some(r)) => r.clone(),
                    (None, None) => return Err(ServiceError::UnknownScreening(id.into())),
                },
            };
            let job = record
                .plan
                .jobs()
                .find(|j| j.tool == Tool::Screening)
                .ok_or_else(|| ServiceError::UnknownScreening(id.to_string()))?;
            // the rendered deck when the job has started, the planned values before
            let deck = record.jobs.get(&job.job_id).and_then(|j| j.deck());
            let get = |k: &str| {
                deck.and_then(|d| d.get(k).map(str::to_string))
                    .or_else(|| job.param(k).map(|v| v.deck_value()))
                    .ok_or_else(|| ServiceError::Screening(format!("funnel job lacks `{k}`")))
            };
            let downstream = Downstream::parse(&get("downstream")?).map_err(|e| ServiceError::Screening(e.to_string()))?;
            let top_n = get("top_n")?.parse().map_err(|_| ServiceError::Screening("top_n is not an integer".into()))?;
            return self.screen(&get("database")?, &get("objective")?, downstream, top_n);
        }
        if self.tables.contains_key(id) {
            let top_n = self
                .defaults
                .get(crate::intent::TaskKind::Screening, "top_n")
                .map(|v| v.deck_value())
                .and_then(|v| v.parse().ok())
                .unwrap_or(1000);
            return self.screen(id, DEFAULT_OBJECTIVE, Downstream::Gcmc, top_n);
        }
        Err(ServiceError::UnknownScreening(id.to_string()))
    }

    /// Sends every case through the full pipeline and compares the
    /// produced value with the reference.
    pub fn run_benchmark(&self, cases: &[BenchmarkCase]) -> Result<Vec<BenchmarkOutcome>, ServiceError> {
        let mut out = Vec::new();
        for (i, case) in cases.iter().enumerate() {
            let sid = format!("bench-{:03}", i + 1);
            let produced = match self.submit_query(Some(&sid), &case.query, &[]) {
                Ok(resp) => {
                    let report = match resp {
                        QueryResponse::Report { report, .. } => Some(report),
                        QueryResponse::RunStarted { run_id, .. } => self.wait_run(&run_id, Duration::from_secs(60))?.report,
                        QueryResponse::Clarification { .. } => None,
                    };
                    match report.as_ref().and_then(|r| r.value(&case.structure_id, &case.metric)) {
                        Some(v) => Ok(v.value),
                        None => Err(format!("no `{}` for {} in the report", case.metric, case.structure_id)),
                    }
                }
                Err(e) => Err(e.to_string()),
            };
            let row = match &produced {
                Ok(v) => compare_to_reference(&[BenchmarkInput {
                    tool: case.tool.clone(),
                    structure_id: case.structure_id.clone(),
                    property: case.property.clone(),
                    unit: case.unit.clone(),
                    reference_value: case.reference_value,
                    produced_value: *v,
                    source: case.source.clone(),
                }])
                .map_err(|e| ServiceError::BadRequest(e.to_string()))?
                .pop(),
                Err(_) => None,
            };
            out.push(BenchmarkOutcome { case: case.clone(), row, error: produced.err() });
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkOutcome {
    pub case: BenchmarkCase,
    pub row: Option<BenchmarkRow>,
    pub error: Option<String>,
}

impl BenchmarkOutcome {
    /// Produced value equals the expected one bit for bit.
    pub fn exact(&self) -> bool {
        self.row.as_ref().is_some_and(|r| r.produced_value.to_bits() == self.case.expected_value.to_bits())
    }
}

//! Tool adapters in model (surrogate) and replay modes.

pub mod model;
pub mod replay;
pub mod sampling;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use replay::{conditions_hash, conditions_string, ReplayKey, ReplayOutput, ReplayStore};
pub use sampling::{guest_sites, lj_energy, mlip_prescreen, sample_configurations, GuestConfiguration, GuestSite};

use crate::guard::success_marker;
use crate::inputgen::{render_deck, InputDeck};
use crate::planner::Tool;
use crate::screening::{configure_funnel, run_funnel, DescriptorRow, Downstream};
use crate::structdb::StructDb;
use crate::units::{format_number, Measurement};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ToolError {
    #[error("no replay fixture for {} {} {} [{}]", .0.tool.name(), .0.structure, .0.task, .0.conditions_hash)]
    FixtureMiss(ReplayKey),
    #[error("surrogate undefined: {0}")]
    ModelDomain(String),
    #[error("cannot place guest {index} in {host} after {proposals} proposals")]
    PlacementImpossible { host: String, index: usize, proposals: usize },
    #[error("structure `{0}` is unknown to the toolkit")]
    UnknownStructure(String),
    #[error("tool `{0}` has no adapter")]
    UnsupportedTool(String),
    #[error("fixture: {0}")]
    Fixture(String),
    #[error("io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Model,
    Replay,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Model => "model",
            Mode::Replay => "replay",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "model" => Ok(Mode::Model),
            "replay" => Ok(Mode::Replay),
            _ => Err(format!("unknown mode `{s}` (model|replay)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exit {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolRun {
    pub job_id: String,
    pub deck: InputDeck,
    pub workdir: Option<PathBuf>,
    pub log: String,
    pub outputs: BTreeMap<String, Measurement>,
    /// Non-numeric products, e.g. a screening shortlist.
    #[serde(default)]
    pub artifacts: BTreeMap<String, Vec<String>>,
    pub exit: Exit,
    pub duration_ms: u64,
}

/// Anything that can turn a validated deck into a run.
pub trait ToolAdapter: Send + Sync {
    fn execute(&self, deck: &InputDeck, workdir: Option<&Path>) -> Result<ToolRun, ToolError>;
}

fn render_log(deck: &InputDeck, mode: &str, key: Option<&ReplayKey>, outputs: &BTreeMap<String, Measurement>, extra: &[String]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} adapter, mode {mode}", deck.tool.name());
    let _ = writeln!(s, "job {}", deck.job_id);
    let _ = writeln!(s, "task {}", deck.task());
    if let Some(st) = deck.get("structure") {
        let _ = writeln!(s, "structure {st}");
    }
    if let Some(k) = key {
        let _ = writeln!(s, "replay key {}", k.conditions_hash);
    }
    for line in extra {
        let _ = writeln!(s, "{line}");
    }
    for (m, v) in outputs {
        let _ = writeln!(s, "{m} = {v}");
    }
    s.push_str(success_marker(deck.tool));
    s.push('\n');
    s
}

pub fn render_outputs(outputs: &BTreeMap<String, Measurement>) -> String {
    outputs.iter().map(|(m, v)| format!("{m}\t{}\t{}\n", format_number(v.value), v.unit)).collect()
}

/// Reads the `metric<TAB>value<TAB>unit` format written to `out`.
pub fn parse_outputs(text: &str) -> Result<BTreeMap<String, Measurement>, ToolError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let c: Vec<&str> = line.split('\t').collect();
        let bad = || ToolError::Fixture(format!("out line {}: `{line}`", i + 1));
        if c.len() != 3 {
            return Err(bad());
        }
        out.insert(c[0].to_string(), Measurement::new(c[1].parse().map_err(|_| bad())?, c[2]));
    }
    Ok(out)
}

/// Writes `deck`, `log` and `out` (plus one file per artifact) into `dir`.
pub fn write_workdir(dir: &Path, run: &ToolRun) -> Result<(), ToolError> {
    let io = |e: std::io::Error| ToolError::Io(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    std::fs::write(dir.join("deck"), render_deck(&run.deck)).map_err(io)?;
    std::fs::write(dir.join("log"), &run.log).map_err(io)?;
    std::fs::write(dir.join("out"), render_outputs(&run.outputs)).map_err(io)?;
    for (name, lines) in &run.artifacts {
        let mut body = lines.join("\n");
        body.push('\n');
        std::fs::write(dir.join(format!("{name}.txt")), body).map_err(io)?;
    }
    Ok(())
}

/// Built-in adapters for every simulation tool.
#[derive(Clone)]
pub struct Toolkit {
    pub mode: Mode,
    db: Arc<StructDb>,
    replay: Arc<ReplayStore>,
    tables: Arc<BTreeMap<String, Vec<DescriptorRow>>>,
    /// Seed for surrogate placements that are not driven by a deck.
    pub seed: u64,
}

impl Toolkit {
    pub fn new(mode: Mode, db: Arc<StructDb>, replay: Arc<ReplayStore>) -> Self {
        Toolkit { mode, db, replay, tables: Arc::new(BTreeMap::new()), seed: 42 }
    }

    pub fn with_tables(mut self, tables: Arc<BTreeMap<String, Vec<DescriptorRow>>>) -> Self {
        self.tables = tables;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn db(&self) -> &StructDb {
        &self.db
    }

    fn funnel(&self, deck: &InputDeck) -> Result<(BTreeMap<String, Measurement>, Vec<String>, Vec<String>), ToolError> {
        let get = |k: &str| deck.get(k).ok_or_else(|| ToolError::ModelDomain(format!("deck lacks `{k}`")));
        let database = get("database")?;
        let rows = self.tables.get(database).ok_or_else(|| ToolError::Fixture(format!("no descriptor table `{database}`")))?;
        let downstream = Downstream::parse(get("downstream")?).map_err(|e| ToolError::ModelDomain(e.to_string()))?;
        let top_n: usize = get("top_n")?.parse().map_err(|_| ToolError::ModelDomain("top_n is not an integer".into()))?;
        let config = configure_funnel(get("objective")?, downstream, top_n, &[]).map_err(|e| ToolError::ModelDomain(e.to_string()))?;
        let report = run_funnel(rows, &config).map_err(|e| ToolError::ModelDomain(e.to_string()))?;
        let mut outputs = BTreeMap::new();
        let mut lines = Vec::new();
        for s in &report.stages {
            lines.push(format!("stage {} {} -> {}", s.stage_id, s.input_count, s.output_count));
            outputs.insert(format!("stage_{}", s.stage_id), Measurement::new(s.output_count as f64, "count"));
        }
        outputs.insert("candidates".into(), Measurement::new(rows.len() as f64, "count"));
        outputs.insert("shortlist_size".into(), Measurement::new(report.shortlist.len() as f64, "count"));
        Ok((outputs, report.shortlist, lines))
    }
}

impl ToolAdapter for Toolkit {
    fn execute(&self, deck: &InputDeck, workdir: Option<&Path>) -> Result<ToolRun, ToolError> {
        let started = Instant::now();
        let mut artifacts = BTreeMap::new();
        let mut extra = Vec::new();
        let mut key = None;
        let outputs = match deck.tool {
            Tool::Report => return Err(ToolError::UnsupportedTool("report".into())),
            // the funnel is a deterministic filter, computed in both modes
            Tool::Screening => {
                let (o, shortlist, lines) = self.funnel(deck)?;
                artifacts.insert("shortlist".to_string(), shortlist);
                extra = lines;
                o
            }
            _ => match self.mode {
                Mode::Replay => {
                    let k = ReplayKey::for_deck(deck);
                    let hits = self.replay.lookup(&k)?;
                    let o = hits.iter().map(|h| (h.metric.clone(), h.value.clone())).collect();
                    extra = hits.iter().map(|h| format!("source {} {}", h.metric, h.source)).collect();
                    key = Some(k);
                    o
                }
                Mode::Model => {
                    let s = deck.get("structure").unwrap_or("");
                    let host = self.db.structure(s).ok_or_else(|| ToolError::UnknownStructure(s.to_string()))?;
                    model::run(deck, host, &self.db, self.seed)?
                }
            },
        };
        if outputs.is_empty() {
            return Err(ToolError::ModelDomain(format!("{} produced no outputs", deck.job_id)));
        }
        let log = render_log(deck, self.mode.name(), key.as_ref(), &outputs, &extra);
        let run = ToolRun {
            job_id: deck.job_id.clone(),
            deck: deck.clone(),
            workdir: workdir.map(Path::to_path_buf),
            log,
            outputs,
            artifacts,
            exit: Exit::Ok,
            duration_ms: started.elapsed().as_millis() as u64,
        };
        if let Some(dir) = workdir {
            write_workdir(dir, &run)?;
        }
        Ok(run)
    }
}

/// Shells out to a user command run inside the workdir. The command gets
/// the rendered deck in `deck`, must write `out` in the toolkit output
/// format, and its stdout becomes the log. Disabled unless configured.
#[derive(Debug, Clone)]
pub struct ExternalAdapter {
    pub program: PathBuf,
    pub args: Vec<String>,
}

impl ToolAdapter for ExternalAdapter {
    fn execute(&self, deck: &InputDeck, workdir: Option<&Path>) -> Result<ToolRun, ToolError> {
        let dir = workdir.ok_or_else(|| ToolError::Io("external adapter needs a workdir".into()))?;
        let io = |e: std::io::Error| ToolError::Io(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        std::fs::write(dir.join("deck"), render_deck(deck)).map_err(io)?;
        let started = Instant::now();
        let output = Command::new(&self.program)
            .args(&self.args)
            .current_dir(dir)
            .env("MOF_FORGE_DECK", dir.join("deck"))
            .env("MOF_FORGE_TOOL", deck.tool.name())
            .output()
            .map_err(|e| ToolError::Io(format!("{}: {e}", self.program.display())))?;
        let mut log = String::from_utf8_lossy(&output.stdout).into_owned();
        log.push_str(&String::from_utf8_lossy(&output.stderr));
        std::fs::write(dir.join("log"), &log).map_err(io)?;
        let outputs = match std::fs::read_to_string(dir.join("out")) {
            Ok(text) => parse_outputs(&text)?,
            Err(_) => BTreeMap::new(),
        };
        let marker_ok = log.lines().rev().find(|l| !l.trim().is_empty()).is_some_and(|l| l.trim_end() == success_marker(deck.tool));
        let exit = if output.status.success() && marker_ok && !outputs.is_empty() { Exit::Ok } else { Exit::Failed };
        Ok(ToolRun {
            job_id: deck.job_id.clone(),
            deck: deck.clone(),
            workdir: Some(dir.to_path_buf()),
            log,
            outputs,
            artifacts: BTreeMap::new(),
            exit,
            duration_ms: started.elapsed().as_millis() as u64,
        })
    }
}

//! Command-line surface. Commands write to the given sinks so tests can
//! run them in-process.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mof_forge::intent::{parse_query, Attachment, ParseOutcome, Query};
use mof_forge::planner::{build_plan, DefaultTable, Plan, TemplateRegistry};
use mof_forge::reporting::{parse_benchmark_table, render_benchmark_tsv, Report};
use mof_forge::retrieval::{build_from_corpus, save_index, ChunkParams, HashEmbedder};
use mof_forge::screening::Downstream;
use mof_forge::service::{QueryResponse, Service, ServiceConfig};
use mof_forge::structdb::StructDb;
use mof_forge::toolkit::Mode;

/// Longest the CLI waits for a run to finish.
const RUN_TIMEOUT: Duration = Duration::from_secs(600);

#[derive(Debug, Parser)]
#[command(name = "mof-forge", version, about = "Plan, run and report MOF simulation workflows")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Fixture root (structures, replay table, descriptor tables, corpus).
    #[arg(long, global = true, env = "MOF_FORGE_FIXTURES")]
    pub fixtures: Option<PathBuf>,
    /// Directory holding run records.
    #[arg(long, global = true, default_value = "runs")]
    pub runs_dir: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = ModeArg::Replay)]
    pub mode: ModeArg,
    /// Core pool shared by concurrent jobs.
    #[arg(long, global = true, default_value_t = 8)]
    pub cores: u32,
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Replay,
    Model,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ask a question; clarifications and confirmations are read from stdin.
    Ask(AskArgs),
    /// Print the plan a query would run, without running it.
    Plan {
        text: String,
        #[arg(long = "attach", value_name = "NAME=FILE")]
        attach: Vec<String>,
    },
    /// Run a saved plan (JSON as printed by `plan`).
    Run {
        #[arg(long)]
        plan: PathBuf,
        #[command(flatten)]
        decide: Decide,
        #[arg(long)]
        json: bool,
    },
    /// Retrieval index maintenance.
    Index {
        #[command(subcommand)]
        action: IndexCommand,
    },
    /// Run a screening funnel over a packaged descriptor table.
    Screen {
        #[arg(long)]
        database: String,
        #[arg(long, default_value = "ch4-uptake")]
        objective: String,
        #[arg(long, default_value = "gcmc")]
        downstream: String,
        #[arg(long, default_value_t = 1000)]
        top_n: usize,
        #[arg(long)]
        json: bool,
    },
    /// Send every row of a benchmark table through the pipeline.
    Bench {
        #[arg(long)]
        table: PathBuf,
        /// Also write the comparison table here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum IndexCommand {
    Build {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 384)]
        dims: usize,
        #[arg(long, default_value_t = 200)]
        file_batch: usize,
        #[arg(long, default_value_t = 512)]
        encode_batch: usize,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct Decide {
    /// Accept every proposed correction without asking.
    #[arg(long, conflicts_with = "no")]
    pub yes: bool,
    /// Decline every proposed correction without asking.
    #[arg(long)]
    pub no: bool,
}

#[derive(Debug, Args)]
pub struct AskArgs {
    pub text: String,
    #[arg(long)]
    pub session: Option<String>,
    /// Attach a reference file, e.g. `--attach settings=in.lammps`.
    #[arg(long = "attach", value_name = "NAME=FILE")]
    pub attach: Vec<String>,
    #[command(flatten)]
    pub decide: Decide,
    /// Print the final response as JSON.
    #[arg(long)]
    pub json: bool,
}

pub struct Io<'a> {
    pub input: &'a mut dyn BufRead,
    pub out: &'a mut dyn Write,
    pub err: &'a mut dyn Write,
}

impl Global {
    pub fn config(&self) -> ServiceConfig {
        let fixtures = self.fixtures.clone().unwrap_or_else(mof_forge::fixtures_root);
        let mut cfg = ServiceConfig::new(&fixtures, &self.runs_dir);
        cfg.mode = match self.mode {
            ModeArg::Replay => Mode::Replay,
            ModeArg::Model => Mode::Model,
        };
        cfg.cores = self.cores;
        cfg.seed = self.seed;
        cfg
    }

    pub fn service(&self) -> Result<Arc<Service>> {
        Ok(Service::open(self.config())?)
    }
}

pub fn attachments(specs: &[String]) -> Result<Vec<Attachment>> {
    specs
        .iter()
        .map(|s| {
            let (name, file) = s.split_once('=').ok_or_else(|| anyhow!("--attach expects NAME=FILE, got `{s}`"))?;
            let text = std::fs::read_to_string(file).with_context(|| format!("reading {file}"))?;
            Ok(Attachment { name: name.to_string(), text })
        })
        .collect()
}

fn read_line(io: &mut Io) -> Result<Option<String>> {
    let mut line = String::new();
    if io.input.read_line(&mut line)? == 0 {
        return Ok(None);
    }
    Ok(Some(line.trim().to_string()))
}

fn print_report(io: &mut Io, report: &Report) -> Result<()> {
    writeln!(io.out, "{}", report.narrative.trim_end())?;
    Ok(())
}

/// Drives a started run to the end, settling confirmations on the way.
fn follow(svc: &Service, run_id: &str, decide: &Decide, io: &mut Io) -> Result<Option<Report>> {
    let mut after = None;
    loop {
        let view = svc.get_run(run_id)?;
        if view.finished {
            if let Some(e) = &view.error {
                writeln!(io.err, "{e}")?;
            }
            return Ok(view.report);
        }
        for p in &view.snapshot.awaiting {
            let c = &p.correction;
            writeln!(io.err, "Job {} needs confirmation for {} ({:?}):", p.job_id, c.rule_id, c.severity)?;
            for ch in &c.changes {
                writeln!(io.err, "  {}: {} -> {}", ch.key, ch.before.as_deref().unwrap_or("(unset)"), ch.after)?;
            }
            let accept = if decide.yes {
                true
            } else if decide.no {
                false
            } else {
                write!(io.err, "Accept? [y/N] ")?;
                io.err.flush()?;
                matches!(read_line(io)?.as_deref(), Some("y" | "Y" | "yes"))
            };
            svc.confirm_correction(run_id, std::slice::from_ref(&c.rule_id), accept)?;
        }
        if let Some(e) = svc.wait_events(run_id, after, Duration::from_millis(200))?.last() {
            after = Some(e.seq);
        }
        if view.interrupted {
            bail!("run {run_id} was interrupted and cannot be resumed");
        }
    }
}

fn finish_response(svc: &Service, resp: QueryResponse, decide: &Decide, json: bool, io: &mut Io) -> Result<()> {
    let report = match &resp {
        QueryResponse::Report { report, .. } => Some(report.clone()),
        QueryResponse::RunStarted { run_id, jobs, .. } => {
            writeln!(io.err, "started {run_id} with {jobs} jobs")?;
            follow(svc, run_id, decide, io)?
        }
        QueryResponse::Clarification { .. } => unreachable!("clarifications are handled by the caller"),
    };
    let run_id = resp.run_id().unwrap_or_default().to_string();
    match (json, report) {
        (true, Some(r)) => writeln!(io.out, "{}", r.to_json())?,
        (false, Some(r)) => print_report(io, &r)?,
        (_, None) => bail!("run {run_id} produced no report"),
    }
    let view = svc.wait_run(&run_id, RUN_TIMEOUT)?;
    if let Some(e) = view.error {
        bail!(e);
    }
    Ok(())
}

pub fn ask(svc: &Service, args: &AskArgs, io: &mut Io) -> Result<()> {
    let atts = attachments(&args.attach)?;
    let mut resp = svc.submit_query(args.session.as_deref(), &args.text, &atts)?;
    while let QueryResponse::Clarification { session_id, clarification } = &resp {
        writeln!(io.err, "{}", clarification.prompt_text)?;
        write!(io.err, "> ")?;
        io.err.flush()?;
        let Some(answer) = read_line(io)? else {
            bail!("clarification needed in session {session_id}; no answer on stdin");
        };
        resp = svc.respond_clarification(session_id, &answer, &[])?;
    }
    finish_response(svc, resp, &args.decide, args.json, io)
}

pub fn plan(global: &Global, text: &str, attach: &[String], io: &mut Io) -> Result<()> {
    let root = global.fixtures.clone().unwrap_or_else(mof_forge::fixtures_root);
    let db = StructDb::load(&root)?;
    let mut q = Query::new("cli", text);
    q.attachments = attachments(attach)?;
    match parse_query(&q, &db)? {
        ParseOutcome::Clarification(c) => bail!("query needs clarification: {}", c.prompt_text),
        ParseOutcome::Intent(intent) => {
            let plan = build_plan(&intent, &DefaultTable::builtin(), &TemplateRegistry::builtin())?;
            writeln!(io.out, "{}", plan.to_json())?;
        }
    }
    Ok(())
}

pub fn run_plan_file(svc: &Service, path: &Path, decide: &Decide, json: bool, io: &mut Io) -> Result<()> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let plan = Plan::from_json(&text)?;
    // evidence lookup text, rebuilt from the intent
    let i = &plan.intent;
    let query = format!("{:?} {} {}", i.task_kind, i.resolved_ids().join(" "), i.guests.join(" "));
    let resp = svc.launch("cli", &query, plan)?;
    finish_response(svc, resp, decide, json, io)
}

pub fn index_build(corpus: &Path, out: &Path, dims: usize, file_batch: usize, encode_batch: usize, io: &mut Io) -> Result<()> {
    let index = build_from_corpus(corpus, &ChunkParams::default(), &HashEmbedder { dims }, file_batch, encode_batch)?;
    save_index(&index, out)?;
    writeln!(io.out, "indexed {} chunks into {}", index.rows(), out.display())?;
    Ok(())
}

pub fn screen(svc: &Service, database: &str, objective: &str, downstream: &str, top_n: usize, json: bool, io: &mut Io) -> Result<()> {
    let ds = Downstream::parse(downstream)?;
    let report = svc.screen(database, objective, ds, top_n)?;
    if json {
        writeln!(io.out, "{}", serde_json::to_string_pretty(&report)?)?;
        return Ok(());
    }
    writeln!(io.out, "stage\tinput\toutput")?;
    for s in &report.stages {
        writeln!(io.out, "{}\t{}\t{}", s.stage_id, s.input_count, s.output_count)?;
    }
    writeln!(io.out, "shortlist\t{}", report.shortlist.len())?;
    Ok(())
}

pub fn bench(svc: &Service, table: &Path, out_path: Option<&Path>, io: &mut Io) -> Result<()> {
    let text = std::fs::read_to_string(table).with_context(|| format!("reading {}", table.display()))?;
    let cases = parse_benchmark_table(&text)?;
    let outcomes = svc.run_benchmark(&cases)?;
    let rows: Vec<_> = outcomes.iter().filter_map(|o| o.row.clone()).collect();
    let tsv = render_benchmark_tsv(&rows);
    write!(io.out, "{tsv}")?;
    if let Some(p) = out_path {
        std::fs::write(p, &tsv).with_context(|| format!("writing {}", p.display()))?;
    }
    let failed: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.exact())
        .map(|o| format!("{} {}: {}", o.case.structure_id, o.case.property, o.error.as_deref().unwrap_or("value differs from expected")))
        .collect();
    writeln!(io.err, "{}/{} rows reproduced exactly", outcomes.len() - failed.len(), outcomes.len())?;
    if !failed.is_empty() {
        bail!("benchmark mismatches:\n{}", failed.join("\n"));
    }
    Ok(())
}

pub fn dispatch(cli: Cli, io: &mut Io) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Ask(args) => ask(&*g.service()?, &args, io),
        Command::Plan { text, attach } => plan(g, &text, &attach, io),
        Command::Run { plan, decide, json } => run_plan_file(&*g.service()?, &plan, &decide, json, io),
        Command::Index { action: IndexCommand::Build { corpus, out, dims, file_batch, encode_batch } } => {
            index_build(&corpus, &out, dims, file_batch, encode_batch, io)
        }
        Command::Screen { database, objective, downstream, top_n, json } => {
            screen(&*g.service()?, &database, &objective, &downstream, top_n, json, io)
        }
        Command::Bench { table, out } => bench(&*g.service()?, &table, out.as_deref(), io),
        Command::Serve { addr } => {
            let svc = g.service()?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(crate::api::serve(svc, &addr))
        }
    }
}

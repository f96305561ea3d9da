//! Append-only run store: one directory per run plus an index file.

use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use crate::executor::RunRecord;
use crate::reporting::Report;

use super::ServiceError;

pub const INDEX_FILE: &str = "index.tsv";

fn io(path: &Path) -> impl Fn(std::io::Error) -> ServiceError + '_ {
    move |e| ServiceError::Store(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexEntry {
    pub run_id: String,
    pub session_id: String,
    pub plan_id: String,
}

/// Writes never replace a file that already exists.
#[derive(Debug)]
pub struct RunStore {
    root: PathBuf,
    write: Mutex<()>,
}

impl RunStore {
    pub fn open(root: &Path) -> Result<Self, ServiceError> {
        fs::create_dir_all(root).map_err(io(root))?;
        Ok(RunStore { root: root.to_path_buf(), write: Mutex::new(()) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.root.join(run_id)
    }

    /// Claims the next free `run-NNNNNN` directory.
    pub fn allocate(&self) -> Result<String, ServiceError> {
        let _g = self.write.lock().unwrap();
        let mut n = self.entries()?.len() + 1;
        loop {
            let id = format!("run-{n:06}");
            let dir = self.run_dir(&id);
            match fs::create_dir(&dir) {
                Ok(()) => return Ok(id),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => n += 1,
                Err(e) => return Err(io(&dir)(e)),
            }
        }
    }

    pub fn register(&self, entry: &IndexEntry) -> Result<(), ServiceError> {
        let _g = self.write.lock().unwrap();
        let path = self.root.join(INDEX_FILE);
        let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(io(&path))?;
        writeln!(f, "{}\t{}\t{}", entry.run_id, entry.session_id, entry.plan_id).map_err(io(&path))
    }

    pub fn entries(&self) -> Result<Vec<IndexEntry>, ServiceError> {
        let path = self.root.join(INDEX_FILE);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io(&path)(e)),
        };
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
            let c: Vec<&str> = line.split('\t').collect();
            if c.len() != 3 {
                return Err(ServiceError::Store(format!("{} line {}: expected 3 columns", path.display(), i + 1)));
            }
            out.push(IndexEntry { run_id: c[0].into(), session_id: c[1].into(), plan_id: c[2].into() });
        }
        Ok(out)
    }

    fn write_once(&self, path: &Path, text: &str) -> Result<(), ServiceError> {
        let _g = self.write.lock().unwrap();
        match OpenOptions::new().write(true).create_new(true).open(path) {
            Ok(mut f) => f.write_all(text.as_bytes()).map_err(io(path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                let old = fs::read_to_string(path).map_err(io(path))?;
                if old == text {
                    Ok(())
                } else {
                    Err(ServiceError::Store(format!("{} exists with different content", path.display())))
                }
            }
            Err(e) => Err(io(path)(e)),
        }
    }

    pub fn save_report(&self, run_id: &str, report: &Report) -> Result<(), ServiceError> {
        self.write_once(&self.run_dir(run_id).join("report.json"), &report.to_json())
    }

    /// The record the executor wrote when the run ended, if it has ended.
    pub fn load_record(&self, run_id: &str) -> Result<Option<RunRecord>, ServiceError> {
        let path = self.run_dir(run_id).join("record.json");
        match fs::read_to_string(&path) {
            Ok(t) => serde_json::from_str(&t).map(Some).map_err(|e| ServiceError::Store(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io(&path)(e)),
        }
    }

    pub fn load_report(&self, run_id: &str) -> Result<Option<Report>, ServiceError> {
        let path = self.run_dir(run_id).join("report.json");
        match fs::read_to_string(&path) {
            Ok(t) => serde_json::from_str(&t).map(Some).map_err(|e| ServiceError::Store(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io(&path)(e)),
        }
    }
}

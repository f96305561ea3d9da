//! Control plane for natural-language MOF simulation workflows.

pub mod intent;
pub mod planner;
pub mod retrieval;
pub mod screening;
pub mod guard;
pub mod inputgen;
pub mod structdb;
pub mod toolkit;
pub mod executor;
pub mod reporting;
pub mod service;
pub mod units;

use std::path::PathBuf;

/// `$MOF_FORGE_FIXTURES`, else `./fixtures`, else the workspace copy.
pub fn fixtures_root() -> PathBuf {
    if let Some(p) = std::env::var_os("MOF_FORGE_FIXTURES") {
        return PathBuf::from(p);
    }
    let local = PathBuf::from("fixtures");
    if local.join("golden").is_dir() {
        return local;
    }
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

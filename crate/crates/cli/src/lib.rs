//! Scenario runner: parse a TOML scenario, build the pair, extrapolate, run
//! the requested checks and emit a JSON report.

use std::path::Path;

pub mod render;
pub mod runner;
pub mod scenario;

pub use runner::{run, RunReport};
pub use scenario::{Built, Scenario};

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "HYERS_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for unreadable or malformed configs, 3 for everything found while
    /// constructing or running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Invalid(_) | CliError::Io(_) => 3,
        }
    }
}

impl From<hyers_core::Error> for CliError {
    fn from(e: hyers_core::Error) -> Self {
        CliError::Invalid(e.to_string())
    }
}

/// Writes via a temporary file in the target directory and renames it into
/// place, so a failed run never leaves a partial report.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    use std::io::Write;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}

/// Applies `HYERS_THREADS` to the global pool; ignored when unset or invalid.
pub fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()).filter(|n| *n > 0) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Loads, builds and runs a scenario source (`@preset` or a path).
pub fn run_source(source: &str, seed: Option<u64>) -> Result<RunReport, CliError> {
    let (mut scenario, base) = Scenario::load(source)?;
    if let Some(s) = seed {
        scenario.seed = s;
    }
    let built = scenario.build(base.as_deref())?;
    run(&scenario, &built)
}

//! Scenario-driven front end for `projdyn`: `run` simulates a scenario and
//! writes a trajectory CSV plus a text report; `compare` checks the
//! projection method against the classical multiplier method and across
//! inertia variants.

pub mod compare;
pub mod run;
pub mod scenario;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use compare::{compare, CompareReport};
pub use run::{run, RunReport};
pub use scenario::Scenario;

#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable or invalid scenario.
    #[error("configuration error: {0}")]
    Config(String),
    /// The scenario was valid but the run failed.
    #[error("runtime failure: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

/// Command-line overrides shared by all subcommands.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// Resolves an output file: `--out`, then `[output] dir`, then the working
/// directory; the file name defaults to the scenario stem plus `suffix`.
pub(crate) fn output_path(
    scenario_path: &Path,
    scenario: &Scenario,
    opts: &Options,
    name: Option<&str>,
    suffix: &str,
) -> PathBuf {
    let dir = opts
        .out
        .clone()
        .or_else(|| scenario.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let stem = scenario_path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
    dir.join(name.map(str::to_string).unwrap_or_else(|| format!("{stem}{suffix}")))
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", parent.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Formats pass/fail lines for threshold checks; returns whether all passed.
pub(crate) fn check_lines(checks: &[(&str, bool, String)], out: &mut String) -> bool {
    use std::fmt::Write;
    for (name, ok, detail) in checks {
        let _ = writeln!(out, "check {name}: {} ({detail})", if *ok { "PASS" } else { "FAIL" });
    }
    checks.iter().all(|(_, ok, _)| *ok)
}

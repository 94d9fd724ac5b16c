use std::fmt::Write;
use std::path::{Path, PathBuf};

use projdyn::sim::TrajectoryLog;
use projdyn::{simulate, GeneralizedState};

use crate::scenario::{Policy, Scenario, Setup};
use crate::{check_lines, output_path, write_file, CliError, Options};

/// Outcome of a successful simulation. `passed` is false if any
/// `[expect]` threshold was violated.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub csv_path: PathBuf,
    pub report_path: PathBuf,
    pub text: String,
    pub passed: bool,
    pub rows: usize,
    pub max_constraint_norm: f64,
    pub energy_drift: f64,
    pub nr_total: usize,
    pub nr_max: usize,
    pub final_tracking_error: Option<f64>,
    pub max_tracking_error: Option<f64>,
    pub final_force_error: Option<f64>,
}

pub fn run(path: &Path, opts: &Options) -> Result<RunReport, CliError> {
    let scenario = Scenario::load(path)?;
    let mut setup = scenario.build()?;
    let csv_path = output_path(path, &scenario, opts, scenario.output.csv.as_deref(), ".csv");
    let report_path = output_path(path, &scenario, opts, scenario.output.report.as_deref(), ".report.txt");

    let log = match simulate(&setup.system, &setup.initial, &mut setup.policy, &setup.config) {
        Ok(log) => log,
        Err(aborted) => {
            let partial = csv_path.with_extension("partial.csv");
            write_file(&partial, &aborted.partial.to_csv_string())?;
            return Err(CliError::Runtime(format!(
                "{} (partial log of {} rows written to {})",
                aborted.error,
                aborted.partial.len(),
                partial.display()
            )));
        }
    };
    write_file(&csv_path, &log.to_csv_string())?;

    let (final_tracking_error, max_tracking_error) = tracking_errors(&setup, &log)?;
    let final_force_error = match &setup.policy.inner {
        Policy::Hybrid(h) => h.error_history.last().map(|(_, e)| e.norm()),
        _ => None,
    };
    let nr_total = log.rows.iter().map(|r| r.nr_iters).sum();
    let nr_max = log.rows.iter().map(|r| r.nr_iters).max().unwrap_or(0);
    let mut report = RunReport {
        csv_path,
        report_path,
        text: String::new(),
        passed: true,
        rows: log.len(),
        max_constraint_norm: log.max_constraint_norm(),
        energy_drift: log.relative_energy_drift(),
        nr_total,
        nr_max,
        final_tracking_error,
        max_tracking_error,
        final_force_error,
    };
    let (passed, checks) = apply_expectations(&scenario, &report)?;
    report.text = render(path, &scenario, &setup, &report) + &checks;
    report.passed = passed;
    write_file(&report.report_path, &report.text)?;
    Ok(report)
}

/// Final and maximum `‖θ_d - θ‖` over the log, if a motion target exists.
fn tracking_errors(setup: &Setup, log: &TrajectoryLog) -> Result<(Option<f64>, Option<f64>), CliError> {
    let Some(desired) = &setup.desired else { return Ok((None, None)) };
    let mut last = 0.0;
    let mut worst = 0.0f64;
    for row in &log.rows {
        let state = GeneralizedState::new(row.q.clone(), row.qdot.clone(), row.t)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let (theta, _) = setup.task.coordinates(&state);
        last = (desired.sample(row.t).value - theta).norm();
        worst = worst.max(last);
    }
    Ok((Some(last), Some(worst)))
}

fn render(path: &Path, scenario: &Scenario, setup: &Setup, r: &RunReport) -> String {
    let cfg = &setup.config;
    let steps = r.rows.saturating_sub(1).max(1);
    let mut s = String::new();
    let _ = writeln!(s, "scenario        {}", path.display());
    let _ = writeln!(
        s,
        "model           {:?} (dof {}, constraints {})",
        scenario.model.name,
        setup.system.dof(),
        setup.system.n_constraints()
    );
    let _ = writeln!(s, "controller      {:?}", scenario.controller.kind);
    let _ = writeln!(
        s,
        "integrator      {:?}, dt = {:e}, t_end = {}, variant {:?}",
        cfg.integrator, cfg.dt, cfg.t_end, cfg.variant
    );
    let _ = writeln!(s, "rows            {}", r.rows);
    let _ = writeln!(s, "max |phi|       {:.3e}", r.max_constraint_norm);
    let _ = writeln!(s, "energy drift    {:.3e} (relative)", r.energy_drift);
    let _ = writeln!(
        s,
        "nr iterations   total {}, max {}, mean {:.2} per step",
        r.nr_total,
        r.nr_max,
        r.nr_total as f64 / steps as f64
    );
    if let (Some(last), Some(worst)) = (r.final_tracking_error, r.max_tracking_error) {
        let _ = writeln!(s, "tracking error  final {last:.3e}, max {worst:.3e}");
    }
    if let Some(e) = r.final_force_error {
        let _ = writeln!(s, "force error     final {e:.3e}");
    }
    let _ = writeln!(s, "csv             {}", r.csv_path.display());
    s
}

fn apply_expectations(scenario: &Scenario, r: &RunReport) -> Result<(bool, String), CliError> {
    let x = &scenario.expect;
    let mut checks = Vec::new();
    let mut bound = |name: &'static str, limit: Option<f64>, value: Option<f64>| -> Result<(), CliError> {
        match (limit, value) {
            (Some(limit), Some(v)) => {
                checks.push((name, v <= limit, format!("{v:.3e} <= {limit:e}")));
                Ok(())
            }
            (Some(_), None) => Err(CliError::Config(format!("expect.{name} needs a controller that provides it"))),
            (None, _) => Ok(()),
        }
    };
    bound("max_constraint_norm", x.max_constraint_norm, Some(r.max_constraint_norm))?;
    bound("max_energy_drift", x.max_energy_drift, Some(r.energy_drift))?;
    bound("final_tracking_error", x.final_tracking_error, r.final_tracking_error)?;
    bound("final_force_error", x.final_force_error, r.final_force_error)?;
    if x.max_classical_delta.is_some()
        || x.max_variant_delta.is_some()
        || x.min_classical_failures.is_some()
        || x.max_projection_failures.is_some()
    {
        log::debug!("comparison expectations are checked by `compare` only");
    }
    let mut text = String::new();
    let ok = check_lines(&checks, &mut text);
    Ok((ok, text))
}

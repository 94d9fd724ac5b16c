use std::f64::consts::PI;
use std::fmt::Write;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use projdyn::model::circle::polar_state;
use projdyn::model::slider_crank::branch_state;
use projdyn::sim::TrajectoryLog;
use projdyn::{forward_dynamics, forward_dynamics_classical, simulate, GeneralizedState, InertiaVariant, MechanicalSystem};

use crate::scenario::{ModelName, ModelSpec, Scenario};
use crate::{check_lines, output_path, write_file, CliError, Options};

const VARIANTS: [InertiaVariant; 3] = [
    InertiaVariant::Skew,
    InertiaVariant::Symmetric,
    InertiaVariant::Parameterized { gamma: None },
];

/// Agreement of two methods over a set of states.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Agreement {
    pub states: usize,
    /// `max |Δq̈|` over states where both methods succeeded.
    pub max_delta: f64,
    pub classical_failures: usize,
    pub projection_failures: usize,
}

impl Agreement {
    fn merge(self, other: Agreement) -> Agreement {
        Agreement {
            states: self.states + other.states,
            max_delta: self.max_delta.max(other.max_delta),
            classical_failures: self.classical_failures + other.classical_failures,
            projection_failures: self.projection_failures + other.projection_failures,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub report_path: PathBuf,
    pub text: String,
    pub passed: bool,
    /// Projection vs classical along the simulated trajectory.
    pub trajectory: Agreement,
    /// Times at which the classical method failed on the trajectory.
    pub classical_failure_times: Vec<f64>,
    /// Projection vs classical at random states.
    pub sampled: Agreement,
    /// Pairwise `max |Δq̈|` between the inertia variants along the trajectory.
    pub max_variant_delta: f64,
    pub seed: u64,
}

pub fn compare(path: &Path, opts: &Options) -> Result<CompareReport, CliError> {
    let scenario = Scenario::load(path)?;
    let mut setup = scenario.build()?;
    let seed = opts.seed.unwrap_or(scenario.compare.seed);
    let report_path = output_path(path, &scenario, opts, None, ".compare.txt");
    let log = simulate(&setup.system, &setup.initial, &mut setup.policy, &setup.config)
        .map_err(|a| CliError::Runtime(format!("projection-method simulation failed: {a}")))?;

    let sys = &setup.system;
    let (trajectory, variants, sampled) = std::thread::scope(|s| {
        let classical = s.spawn(|| classical_leg(sys, &log));
        let variants = s.spawn(|| variant_leg(sys, &log));
        let sampled = s.spawn(|| sampled_leg(sys, &scenario.model, scenario.compare.samples, seed));
        (
            classical.join().expect("classical leg panicked"),
            variants.join().expect("variant leg panicked"),
            sampled.join().expect("sampling leg panicked"),
        )
    });
    let (trajectory, classical_failure_times) = trajectory?;
    let (max_variant_delta, variant_failures) = variants?;
    let trajectory = Agreement {
        projection_failures: trajectory.projection_failures + variant_failures,
        ..trajectory
    };

    let mut report = CompareReport {
        report_path,
        text: String::new(),
        passed: true,
        trajectory,
        classical_failure_times,
        sampled,
        max_variant_delta,
        seed,
    };
    let (passed, checks) = expectations(&scenario, &report);
    report.text = render(path, &report) + &checks;
    report.passed = passed;
    write_file(&report.report_path, &report.text)?;
    Ok(report)
}

fn row_state(row: &projdyn::sim::LogRow) -> Result<GeneralizedState, CliError> {
    GeneralizedState::new(row.q.clone(), row.qdot.clone(), row.t).map_err(|e| CliError::Runtime(e.to_string()))
}

fn agreement(sys: &MechanicalSystem, state: &GeneralizedState, f: &DVector<f64>, acc: &mut Agreement) -> bool {
    acc.states += 1;
    let projected = forward_dynamics(sys, state, f, InertiaVariant::Skew);
    let classical = forward_dynamics_classical(sys, state, f);
    if projected.is_err() {
        acc.projection_failures += 1;
    }
    if classical.is_err() {
        acc.classical_failures += 1;
    }
    if let (Ok(p), Ok(c)) = (&projected, &classical) {
        acc.max_delta = acc.max_delta.max((&p.qddot - &c.qddot).amax());
    }
    classical.is_ok()
}

fn classical_leg(sys: &MechanicalSystem, log: &TrajectoryLog) -> Result<(Agreement, Vec<f64>), CliError> {
    let mut acc = Agreement::default();
    let mut failures = Vec::new();
    for row in &log.rows {
        if !agreement(sys, &row_state(row)?, &row.force, &mut acc) {
            failures.push(row.t);
        }
    }
    Ok((acc, failures))
}

fn variant_leg(sys: &MechanicalSystem, log: &TrajectoryLog) -> Result<(f64, usize), CliError> {
    let mut worst = 0.0f64;
    let mut failures = 0;
    for row in &log.rows {
        let state = row_state(row)?;
        let results: Vec<_> = VARIANTS.iter().map(|&v| forward_dynamics(sys, &state, &row.force, v)).collect();
        let ok: Vec<_> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
        failures += results.len() - ok.len();
        for (i, a) in ok.iter().enumerate() {
            for b in &ok[i + 1..] {
                worst = worst.max((&a.qddot - &b.qddot).amax());
            }
        }
    }
    Ok((worst, failures))
}

fn sampled_leg(sys: &MechanicalSystem, model: &ModelSpec, samples: usize, seed: u64) -> Agreement {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = Agreement::default();
    for _ in 0..samples {
        let rate = rng.gen_range(-3.0..3.0);
        let (q, qdot) = match model.name {
            ModelName::ParticleOnCircle => polar_state(model.radius, rng.gen_range(-PI..PI), rate),
            ModelName::SliderCrank => branch_state(rng.gen_range(0.0..2.0 * PI), rate),
        };
        let f = DVector::from_fn(sys.dof(), |_, _| rng.gen_range(-10.0..10.0));
        let state = GeneralizedState::new(q, qdot, 0.0).expect("sampled state has matching dimensions");
        agreement(sys, &state, &f, &mut acc);
    }
    acc
}

fn render(path: &Path, r: &CompareReport) -> String {
    let mut s = String::new();
    let line = |s: &mut String, name: &str, a: &Agreement| {
        let _ = writeln!(
            s,
            "{name:<16}{} states: max |dqdd| {:.3e}, classical failures {}, projection failures {}",
            a.states, a.max_delta, a.classical_failures, a.projection_failures
        );
    };
    let _ = writeln!(s, "scenario        {}", path.display());
    line(&mut s, "trajectory", &r.trajectory);
    if let (Some(first), Some(last)) = (r.classical_failure_times.first(), r.classical_failure_times.last()) {
        let _ = writeln!(s, "                classical method failed for t in [{first}, {last}]");
    }
    line(&mut s, "random states", &r.sampled);
    let _ = writeln!(s, "                seed {}", r.seed);
    let _ = writeln!(s, "variants        pairwise max |dqdd| {:.3e} (skew, symmetric, parameterized)", r.max_variant_delta);
    s
}

fn expectations(scenario: &Scenario, r: &CompareReport) -> (bool, String) {
    let x = &scenario.expect;
    let total = r.trajectory.merge(r.sampled);
    let mut checks = Vec::new();
    if let Some(limit) = x.max_classical_delta {
        checks.push(("max_classical_delta", total.max_delta <= limit, format!("{:.3e} <= {limit:e}", total.max_delta)));
    }
    if let Some(limit) = x.max_variant_delta {
        checks.push(("max_variant_delta", r.max_variant_delta <= limit, format!("{:.3e} <= {limit:e}", r.max_variant_delta)));
    }
    if let Some(min) = x.min_classical_failures {
        let n = r.trajectory.classical_failures;
        checks.push(("min_classical_failures", n >= min, format!("{n} on the trajectory >= {min}")));
    }
    if let Some(max) = x.max_projection_failures {
        let n = total.projection_failures;
        checks.push(("max_projection_failures", n <= max, format!("{n} <= {max}")));
    }
    let mut text = String::new();
    let ok = check_lines(&checks, &mut text);
    (ok, text)
}

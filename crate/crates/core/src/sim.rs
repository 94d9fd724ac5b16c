//! Fixed-step integration of the projected dynamics with Newton-Raphson
//! projection of the coordinates back onto the constraint manifold.
//!
//! Every step evaluates the dynamics at the start state first; that
//! evaluation is what gets logged (acceleration, constraint force, applied
//! force) and what stateful controllers observe through
//! [`ForcePolicy::end_step`]. The state is then advanced with RK4 or
//! semi-implicit Euler, and the coordinates are corrected with
//! `q ← q - A⁺Φ(q)` followed by the velocity projection `q̇ ← Pq̇`.

use std::fmt;
use std::io::{BufRead, Write};

use log::{debug, warn};
use nalgebra::DVector;

use crate::dynamics::{DynamicsContext, DynamicsSolution, InertiaVariant};
use crate::error::{check_dim, Error, Result};
use crate::model::{GeneralizedState, MechanicalSystem};
use crate::projection::{pinv, pseudo_inverse};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    #[default]
    Rk4,
    SemiImplicitEuler,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub integrator: Integrator,
    /// Accepted constraint residual `‖Φ‖` after a correction sweep.
    pub nr_tol: f64,
    pub nr_max_iter: usize,
    /// Steps between scheduled correction sweeps. A sweep also runs whenever
    /// `‖Φ‖` exceeds `10·nr_tol`.
    pub correction_every: usize,
    pub variant: InertiaVariant,
}

impl SimConfig {
    pub fn new(dt: f64, t_end: f64) -> Result<Self> {
        let cfg = Self {
            dt,
            t_end,
            integrator: Integrator::Rk4,
            nr_tol: 1e-10,
            nr_max_iter: 10,
            correction_every: 1,
            variant: InertiaVariant::Skew,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "t_end must be non-negative, got {}",
                self.t_end
            )));
        }
        if self.nr_tol.is_nan() || self.nr_tol <= 0.0 {
            return Err(Error::InvalidParameter(format!("nr_tol must be positive, got {}", self.nr_tol)));
        }
        if self.nr_max_iter == 0 {
            return Err(Error::InvalidParameter("nr_max_iter must be at least 1".into()));
        }
        if self.correction_every == 0 {
            return Err(Error::InvalidParameter("correction_every must be at least 1".into()));
        }
        if let InertiaVariant::Parameterized { gamma: Some(g) } = self.variant {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::InvalidParameter(format!("gamma must be positive, got {g}")));
            }
        }
        Ok(())
    }

    /// Number of integration steps, `floor(t_end/dt)` with a small guard
    /// against `t_end/dt` landing just below an integer.
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt + 1e-9).floor() as usize
    }

    pub fn with_integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }

    pub fn with_variant(mut self, variant: InertiaVariant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_correction_every(mut self, every: usize) -> Self {
        self.correction_every = every;
        self
    }

    pub fn with_nr(mut self, tol: f64, max_iter: usize) -> Self {
        self.nr_tol = tol;
        self.nr_max_iter = max_iter;
        self
    }
}

/// Source of the generalized input force.
///
/// `force` is called at every integration stage and must not advance internal
/// state; `end_step` is called once per accepted step with the start state,
/// the force applied at the first stage and the resulting dynamics, and is
/// where stateful controllers update integrators or measurements.
pub trait ForcePolicy {
    fn force(&mut self, sys: &MechanicalSystem, state: &GeneralizedState) -> Result<DVector<f64>>;

    fn end_step(
        &mut self,
        _sys: &MechanicalSystem,
        _state: &GeneralizedState,
        _applied: &DVector<f64>,
        _solution: &DynamicsSolution,
        _dt: f64,
    ) -> Result<()> {
        Ok(())
    }
}

impl<F> ForcePolicy for F
where
    F: FnMut(&MechanicalSystem, &GeneralizedState) -> Result<DVector<f64>>,
{
    fn force(&mut self, sys: &MechanicalSystem, state: &GeneralizedState) -> Result<DVector<f64>> {
        self(sys, state)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroForce;

impl ForcePolicy for ZeroForce {
    fn force(&mut self, sys: &MechanicalSystem, _: &GeneralizedState) -> Result<DVector<f64>> {
        Ok(DVector::zeros(sys.dof()))
    }
}

#[derive(Debug, Clone)]
pub struct ConstantForce(pub DVector<f64>);

impl ForcePolicy for ConstantForce {
    fn force(&mut self, sys: &MechanicalSystem, _: &GeneralizedState) -> Result<DVector<f64>> {
        check_dim("constant force", sys.dof(), self.0.len())?;
        Ok(self.0.clone())
    }
}

/// Adds a constant load the wrapped policy does not know about. The wrapped
/// policy observes its own command in `end_step`, not the disturbed one.
#[derive(Debug, Clone)]
pub struct Disturbed<P> {
    pub inner: P,
    pub load: DVector<f64>,
}

impl<P: ForcePolicy> ForcePolicy for Disturbed<P> {
    fn force(&mut self, sys: &MechanicalSystem, state: &GeneralizedState) -> Result<DVector<f64>> {
        check_dim("disturbance", sys.dof(), self.load.len())?;
        Ok(self.inner.force(sys, state)? + &self.load)
    }

    fn end_step(
        &mut self,
        sys: &MechanicalSystem,
        state: &GeneralizedState,
        applied: &DVector<f64>,
        solution: &DynamicsSolution,
        dt: f64,
    ) -> Result<()> {
        self.inner.end_step(sys, state, &(applied - &self.load), solution, dt)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NrOutcome {
    pub q: DVector<f64>,
    pub iterations: usize,
    /// `‖Φ‖` before the first and after every update.
    pub residuals: Vec<f64>,
    pub converged: bool,
}

/// Newton-Raphson projection `q ← q - A⁺Φ(q)` onto `Φ(q) = 0`.
///
/// Each update is the minimum-norm correction. Two consecutive residual
/// increases (above round-off noise) abort with [`Error::ProjectionFailure`].
/// Running out of iterations is not an error; `converged` is false.
pub fn nr_project(
    sys: &MechanicalSystem,
    q0: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<NrOutcome> {
    check_dim("coordinates", sys.dof(), q0.len())?;
    let mut q = q0.clone();
    let mut phi = sys.constraint(&q)?;
    let mut residuals = vec![phi.norm()];
    let floor = 16.0 * f64::EPSILON * (1.0 + residuals[0] + q.norm());
    let mut rises = 0;
    let mut iterations = 0;
    while residuals[iterations] > tol && iterations < max_iter {
        let a = sys.jacobian(&q)?;
        q -= pinv(&a, sys.rank_tolerance()) * &phi;
        phi = sys.constraint(&q)?;
        let r = phi.norm();
        if !r.is_finite() {
            residuals.push(r);
            return Err(Error::ProjectionFailure { residuals });
        }
        rises = if r > residuals[iterations] + floor { rises + 1 } else { 0 };
        residuals.push(r);
        iterations += 1;
        if rises >= 2 {
            return Err(Error::ProjectionFailure { residuals });
        }
    }
    let converged = residuals[iterations] <= tol;
    if !converged {
        debug!(
            "{}: correction stopped after {iterations} iterations at |phi| = {:e}",
            sys.name(),
            residuals[iterations]
        );
    }
    Ok(NrOutcome {
        q,
        iterations,
        residuals,
        converged,
    })
}

fn acceleration(
    sys: &MechanicalSystem,
    policy: &mut dyn ForcePolicy,
    state: &GeneralizedState,
    variant: InertiaVariant,
) -> Result<DVector<f64>> {
    let f = policy.force(sys, state)?;
    DynamicsContext::assemble(sys, state, false)?.acceleration(&f, variant)
}

fn shifted(state: &GeneralizedState, dq: &DVector<f64>, dqd: &DVector<f64>, dt: f64) -> GeneralizedState {
    GeneralizedState {
        q: &state.q + dq,
        qdot: &state.qdot + dqd,
        t: state.t + dt,
    }
}

/// Integrates from `state` over one step given the already evaluated first
/// stage acceleration `a1`. Returns the uncorrected end state.
fn integrate(
    sys: &MechanicalSystem,
    policy: &mut dyn ForcePolicy,
    state: &GeneralizedState,
    a1: &DVector<f64>,
    config: &SimConfig,
) -> Result<GeneralizedState> {
    let dt = config.dt;
    match config.integrator {
        Integrator::SemiImplicitEuler => {
            let qdot = &state.qdot + a1 * dt;
            let q = &state.q + &qdot * dt;
            Ok(GeneralizedState { q, qdot, t: state.t + dt })
        }
        Integrator::Rk4 => {
            let h = dt * 0.5;
            let v1 = &state.qdot;
            let s2 = shifted(state, &(v1 * h), &(a1 * h), h);
            let a2 = acceleration(sys, policy, &s2, config.variant)?;
            let v2 = s2.qdot.clone();
            let s3 = shifted(state, &(&v2 * h), &(&a2 * h), h);
            let a3 = acceleration(sys, policy, &s3, config.variant)?;
            let v3 = s3.qdot.clone();
            let s4 = shifted(state, &(&v3 * dt), &(&a3 * dt), dt);
            let a4 = acceleration(sys, policy, &s4, config.variant)?;
            let v4 = &s4.qdot;
            let w = dt / 6.0;
            Ok(GeneralizedState {
                q: &state.q + (v1 + &v2 * 2.0 + &v3 * 2.0 + v4) * w,
                qdot: &state.qdot + (a1 + &a2 * 2.0 + &a3 * 2.0 + &a4) * w,
                t: state.t + dt,
            })
        }
    }
}

/// Coordinate correction followed by velocity projection. Returns the number
/// of Newton iterations spent.
fn correct(sys: &MechanicalSystem, state: &mut GeneralizedState, config: &SimConfig) -> Result<usize> {
    let out = nr_project(sys, &state.q, config.nr_tol, config.nr_max_iter)?;
    state.q = out.q;
    let pd = pseudo_inverse(&sys.jacobian(&state.q)?, sys.rank_tolerance())?;
    state.qdot = pd.project(&state.qdot);
    Ok(out.iterations)
}

/// One integration step followed by a correction sweep.
pub fn step(
    sys: &MechanicalSystem,
    state: &GeneralizedState,
    policy: &mut dyn ForcePolicy,
    config: &SimConfig,
) -> Result<GeneralizedState> {
    config.validate()?;
    check_dim("state", sys.dof(), state.dof())?;
    let f = policy.force(sys, state)?;
    let ctx = DynamicsContext::new(sys, state)?;
    let sol = ctx.solve(&f, config.variant)?;
    let mut next = integrate(sys, policy, state, &sol.qddot, config)?;
    policy.end_step(sys, state, &f, &sol, config.dt)?;
    correct(sys, &mut next, config)?;
    Ok(next)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
    pub qddot: DVector<f64>,
    pub phi_norm: f64,
    pub energy: f64,
    pub lambda: DVector<f64>,
    pub force: DVector<f64>,
    pub nr_iters: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub dof: usize,
    pub n_constraints: usize,
    pub rows: Vec<LogRow>,
}

/// A run that stopped early; `partial` holds every row logged before the
/// failure.
#[derive(Debug, Clone)]
pub struct Aborted {
    pub error: Error,
    pub partial: TrajectoryLog,
}

impl fmt::Display for Aborted {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = self.partial.rows.last().map_or(0.0, |r| r.t);
        write!(
            f,
            "simulation aborted after {} rows (t = {t}): {}",
            self.partial.rows.len(),
            self.error
        )
    }
}

impl std::error::Error for Aborted {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

fn abort(error: Error, log: TrajectoryLog) -> Box<Aborted> {
    Box::new(Aborted { error, partial: log })
}

pub fn simulate(
    sys: &MechanicalSystem,
    initial: &GeneralizedState,
    policy: &mut dyn ForcePolicy,
    config: &SimConfig,
) -> std::result::Result<TrajectoryLog, Box<Aborted>> {
    let mut log = TrajectoryLog {
        dof: sys.dof(),
        n_constraints: sys.n_constraints(),
        rows: Vec::new(),
    };
    if let Err(e) = config.validate().and_then(|_| check_dim("initial state", sys.dof(), initial.dof())) {
        return Err(abort(e, log));
    }
    let n_steps = config.n_steps();
    log.rows.reserve(n_steps + 1);

    let mut state = initial.clone();
    let mut nr_iters = match prepare_initial(sys, &mut state, config) {
        Ok(iters) => iters,
        Err(e) => return Err(abort(e, log)),
    };

    for k in 0..=n_steps {
        state.t = k as f64 * config.dt;
        let evaluated = policy.force(sys, &state).and_then(|f| {
            let sol = DynamicsContext::new(sys, &state)?.solve(&f, config.variant)?;
            let phi_norm = sys.constraint_norm(&state.q)?;
            let energy = sys.energy(&state)?;
            Ok((f, sol, phi_norm, energy))
        });
        let (f, sol, phi_norm, energy) = match evaluated {
            Ok(v) => v,
            Err(e) => return Err(abort(e, log)),
        };
        log.rows.push(LogRow {
            t: state.t,
            q: state.q.clone(),
            qdot: state.qdot.clone(),
            qddot: sol.qddot.clone(),
            phi_norm,
            energy,
            lambda: sol.multipliers.clone(),
            force: f.clone(),
            nr_iters,
        });
        if k == n_steps {
            break;
        }
        let advanced = integrate(sys, policy, &state, &sol.qddot, config).and_then(|mut next| {
            policy.end_step(sys, &state, &f, &sol, config.dt)?;
            let scheduled = (k + 1) % config.correction_every == 0;
            let iters = if scheduled || sys.constraint_norm(&next.q)? > 10.0 * config.nr_tol {
                correct(sys, &mut next, config)?
            } else {
                0
            };
            Ok((next, iters))
        });
        match advanced {
            Ok((next, iters)) => {
                state = next;
                nr_iters = iters;
            }
            Err(e) => return Err(abort(e, log)),
        }
    }
    Ok(log)
}

fn prepare_initial(sys: &MechanicalSystem, state: &mut GeneralizedState, config: &SimConfig) -> Result<usize> {
    let mut iters = 0;
    if sys.constraint_norm(&state.q)? > config.nr_tol {
        let out = nr_project(sys, &state.q, config.nr_tol, config.nr_max_iter)?;
        if !out.converged {
            warn!("{}: initial state could not be projected onto the constraints", sys.name());
        }
        state.q = out.q;
        iters = out.iterations;
    }
    let pd = pseudo_inverse(&sys.jacobian(&state.q)?, sys.rank_tolerance())?;
    let normal = &state.qdot - pd.project(&state.qdot);
    if normal.norm() > 1e-12 * (1.0 + state.qdot.norm()) {
        warn!("{}: removing inadmissible initial velocity component", sys.name());
        state.qdot -= normal;
    }
    Ok(iters)
}

impl TrajectoryLog {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn max_constraint_norm(&self) -> f64 {
        self.rows.iter().map(|r| r.phi_norm).fold(0.0, f64::max)
    }

    /// `max |E - E₀| / |E₀|`, or the absolute drift when `E₀ = 0`.
    pub fn relative_energy_drift(&self) -> f64 {
        let Some(first) = self.rows.first() else { return 0.0 };
        let e0 = first.energy;
        let scale = if e0 == 0.0 { 1.0 } else { e0.abs() };
        self.rows.iter().map(|r| (r.energy - e0).abs() / scale).fold(0.0, f64::max)
    }

    pub fn header(&self) -> String {
        let mut cols = vec!["t".to_string()];
        for (prefix, count) in [("q", self.dof), ("qd", self.dof), ("qdd", self.dof)] {
            cols.extend((1..=count).map(|i| format!("{prefix}{i}")));
        }
        cols.push("phi_norm".into());
        cols.push("energy".into());
        cols.extend((1..=self.n_constraints).map(|i| format!("lambda{i}")));
        cols.extend((1..=self.dof).map(|i| format!("f{i}")));
        cols.push("nr_iters".into());
        cols.join(",")
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", self.header())?;
        let mut line = String::new();
        for row in &self.rows {
            line.clear();
            push_float(&mut line, row.t);
            for v in [&row.q, &row.qdot, &row.qddot] {
                v.iter().for_each(|&x| push_float(&mut line, x));
            }
            push_float(&mut line, row.phi_norm);
            push_float(&mut line, row.energy);
            row.lambda.iter().for_each(|&x| push_float(&mut line, x));
            row.force.iter().for_each(|&x| push_float(&mut line, x));
            line.push_str(&row.nr_iters.to_string());
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is ascii")
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = match lines.next() {
            Some(Ok(h)) => h,
            Some(Err(e)) => return Err(Error::InvalidInput(format!("csv read failed: {e}"))),
            None => return Err(Error::InvalidInput("empty csv".into())),
        };
        let cols: Vec<&str> = header.trim().split(',').collect();
        let dof = cols.iter().filter(|c| is_indexed(c, "q")).count();
        let n_constraints = cols.iter().filter(|c| is_indexed(c, "lambda")).count();
        let log = TrajectoryLog { dof, n_constraints, rows: Vec::new() };
        if header.trim() != log.header() {
            return Err(Error::InvalidInput(format!("unrecognized csv header: {header}")));
        }
        let width = cols.len();
        let mut rows = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::InvalidInput(format!("csv read failed: {e}")))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != width {
                return Err(Error::InvalidInput(format!(
                    "line {}: expected {width} fields, found {}",
                    lineno + 2,
                    fields.len()
                )));
            }
            let num = |i: usize| -> Result<f64> {
                fields[i].parse::<f64>().map_err(|_| {
                    Error::InvalidInput(format!("line {}: bad number '{}'", lineno + 2, fields[i]))
                })
            };
            let vec = |start: usize, len: usize| -> Result<DVector<f64>> {
                (start..start + len).map(num).collect::<Result<Vec<_>>>().map(DVector::from_vec)
            };
            let n = dof;
            let m = n_constraints;
            let nr_iters = fields[width - 1].parse::<usize>().map_err(|_| {
                Error::InvalidInput(format!("line {}: bad iteration count '{}'", lineno + 2, fields[width - 1]))
            })?;
            rows.push(LogRow {
                t: num(0)?,
                q: vec(1, n)?,
                qdot: vec(1 + n, n)?,
                qddot: vec(1 + 2 * n, n)?,
                phi_norm: num(1 + 3 * n)?,
                energy: num(2 + 3 * n)?,
                lambda: vec(3 + 3 * n, m)?,
                force: vec(3 + 3 * n + m, n)?,
                nr_iters,
            });
        }
        Ok(TrajectoryLog { rows, ..log })
    }
}

fn is_indexed(col: &str, prefix: &str) -> bool {
    col.strip_prefix(prefix)
        .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
}

fn push_float(line: &mut String, x: f64) {
    use std::fmt::Write as _;
    let _ = write!(line, "{x:.16e},");
}

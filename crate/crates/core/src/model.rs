//! Mechanical-system abstraction: inertia, bias forces, scleronomic
//! constraints, actuation topology and reduced-coordinate task maps.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::projection::{singular_values, MetricTensor, RankTolerance};

pub mod circle;
pub mod slider_crank;

pub use circle::make_particle_on_circle;
pub use slider_crank::make_slider_crank;

pub type VectorFn = Arc<dyn Fn(&DVector<f64>) -> Result<DVector<f64>> + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&DVector<f64>) -> Result<DMatrix<f64>> + Send + Sync>;
pub type StateVectorFn =
    Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> Result<DVector<f64>> + Send + Sync>;
pub type StateMatrixFn =
    Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> Result<DMatrix<f64>> + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(&DVector<f64>) -> Result<f64> + Send + Sync>;

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedState {
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
    pub t: f64,
}

impl GeneralizedState {
    pub fn new(q: DVector<f64>, qdot: DVector<f64>, t: f64) -> Result<Self> {
        check_dim("state (qdot)", q.len(), qdot.len())?;
        if !(q.iter().chain(qdot.iter()).all(|x| x.is_finite()) && t.is_finite()) {
            return Err(Error::InvalidInput("state contains non-finite entries".into()));
        }
        Ok(Self { q, qdot, t })
    }

    pub fn at_rest(q: DVector<f64>) -> Self {
        let n = q.len();
        Self {
            q,
            qdot: DVector::zeros(n),
            t: 0.0,
        }
    }

    pub fn from_slices(q: &[f64], qdot: &[f64]) -> Result<Self> {
        Self::new(
            DVector::from_column_slice(q),
            DVector::from_column_slice(qdot),
            0.0,
        )
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }
}

/// Default central-difference step for a point `q`.
pub fn default_fd_step(q: &DVector<f64>) -> f64 {
    1e-7 * (1.0 + q.norm())
}

/// Central-difference Jacobian of a vector-valued map.
pub fn fd_jacobian<F>(constraint: F, q: &DVector<f64>, step: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    if step.is_nan() || step <= 0.0 {
        return Err(Error::InvalidParameter(format!("finite-difference step {step}")));
    }
    let n = q.len();
    let mut columns = Vec::with_capacity(n);
    for j in 0..n {
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[j] += step;
        qm[j] -= step;
        let d = (constraint(&qp)? - constraint(&qm)?) / (2.0 * step);
        columns.push(d);
    }
    let m = columns.first().map_or_else(|| constraint(q).map(|v| v.len()), |c| Ok(c.len()))?;
    let mut a = DMatrix::zeros(m, n);
    for (j, c) in columns.iter().enumerate() {
        a.set_column(j, c);
    }
    Ok(a)
}

/// `Ȧ` as the directional derivative of the Jacobian along `q̇`.
pub fn fd_jacobian_rate<F>(
    jacobian: F,
    q: &DVector<f64>,
    qdot: &DVector<f64>,
    step: f64,
) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DMatrix<f64>>,
{
    if step.is_nan() || step <= 0.0 {
        return Err(Error::InvalidParameter(format!("finite-difference step {step}")));
    }
    check_dim("fd_jacobian_rate", q.len(), qdot.len())?;
    let ap = jacobian(&(q + qdot * step))?;
    let am = jacobian(&(q - qdot * step))?;
    Ok((ap - am) / (2.0 * step))
}

/// A scleronomic constrained mechanical system
/// `M(q)q̈ + h(q, q̇) = f - 𝓕`, `Φ(q) = 0`.
///
/// Evaluators are pure; a system may be shared read-only between threads.
#[derive(Clone)]
pub struct MechanicalSystem {
    name: String,
    dof: usize,
    n_constraints: usize,
    mass_matrix: MatrixFn,
    bias: StateVectorFn,
    constraint: VectorFn,
    jacobian: Option<MatrixFn>,
    jacobian_rate: Option<StateMatrixFn>,
    potential: Option<ScalarFn>,
    actuation: DMatrix<f64>,
    metric: MetricTensor,
    rank_tol: RankTolerance,
}

impl fmt::Debug for MechanicalSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MechanicalSystem")
            .field("name", &self.name)
            .field("dof", &self.dof)
            .field("n_constraints", &self.n_constraints)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .field("analytic_jacobian_rate", &self.jacobian_rate.is_some())
            .field("actuation", &self.actuation.diagonal())
            .field("rank_tol", &self.rank_tol)
            .finish()
    }
}

pub struct SystemBuilder {
    name: String,
    dof: usize,
    n_constraints: usize,
    mass_matrix: Option<MatrixFn>,
    bias: Option<StateVectorFn>,
    constraint: Option<VectorFn>,
    jacobian: Option<MatrixFn>,
    jacobian_rate: Option<StateMatrixFn>,
    potential: Option<ScalarFn>,
    actuation: Option<DMatrix<f64>>,
    metric: Option<MetricTensor>,
    rank_tol: RankTolerance,
}

impl SystemBuilder {
    pub fn mass_matrix(
        mut self,
        f: impl Fn(&DVector<f64>) -> Result<DMatrix<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.mass_matrix = Some(Arc::new(f));
        self
    }

    pub fn bias(
        mut self,
        f: impl Fn(&DVector<f64>, &DVector<f64>) -> Result<DVector<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.bias = Some(Arc::new(f));
        self
    }

    pub fn constraint(
        mut self,
        f: impl Fn(&DVector<f64>) -> Result<DVector<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.constraint = Some(Arc::new(f));
        self
    }

    pub fn jacobian(
        mut self,
        f: impl Fn(&DVector<f64>) -> Result<DMatrix<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.jacobian = Some(Arc::new(f));
        self
    }

    pub fn jacobian_rate(
        mut self,
        f: impl Fn(&DVector<f64>, &DVector<f64>) -> Result<DMatrix<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.jacobian_rate = Some(Arc::new(f));
        self
    }

    pub fn potential(
        mut self,
        f: impl Fn(&DVector<f64>) -> Result<f64> + Send + Sync + 'static,
    ) -> Self {
        self.potential = Some(Arc::new(f));
        self
    }

    pub fn actuation(mut self, b: DMatrix<f64>) -> Self {
        self.actuation = Some(b);
        self
    }

    pub fn metric(mut self, w: MetricTensor) -> Self {
        self.metric = Some(w);
        self
    }

    pub fn rank_tolerance(mut self, tol: RankTolerance) -> Self {
        self.rank_tol = tol;
        self
    }

    pub fn build(self) -> Result<MechanicalSystem> {
        let n = self.dof;
        if n == 0 {
            return Err(Error::InvalidParameter("system needs at least one coordinate".into()));
        }
        let missing = |what: &str| Error::InvalidParameter(format!("missing {what} evaluator"));
        let mass_matrix = self.mass_matrix.ok_or_else(|| missing("mass matrix"))?;
        let bias = self
            .bias
            .unwrap_or_else(|| Arc::new(move |_: &DVector<f64>, _: &DVector<f64>| Ok(DVector::zeros(n))));
        let constraint = match self.constraint {
            Some(c) => c,
            None if self.n_constraints == 0 => Arc::new(|_: &DVector<f64>| Ok(DVector::zeros(0))),
            None => return Err(missing("constraint")),
        };
        let actuation = self.actuation.unwrap_or_else(|| DMatrix::identity(n, n));
        validate_selector(&actuation, n)?;
        let metric = self.metric.unwrap_or_else(|| MetricTensor::identity(n));
        check_dim("metric", n, metric.dim())?;

        Ok(MechanicalSystem {
            name: self.name,
            dof: n,
            n_constraints: self.n_constraints,
            mass_matrix,
            bias,
            constraint,
            jacobian: self.jacobian,
            jacobian_rate: self.jacobian_rate,
            potential: self.potential,
            actuation,
            metric,
            rank_tol: self.rank_tol,
        })
    }
}

fn validate_selector(b: &DMatrix<f64>, n: usize) -> Result<()> {
    if b.shape() != (n, n) {
        return Err(Error::InvalidParameter(format!(
            "actuation selector must be {n}x{n}, got {}x{}",
            b.nrows(),
            b.ncols()
        )));
    }
    for i in 0..n {
        for j in 0..n {
            let v = b[(i, j)];
            let ok = if i == j { v == 0.0 || v == 1.0 } else { v == 0.0 };
            if !ok {
                return Err(Error::InvalidParameter(
                    "actuation selector must be diagonal with 0/1 entries".into(),
                ));
            }
        }
    }
    Ok(())
}

/// Diagonal 0/1 selector from a per-joint actuation mask.
pub fn actuation_selector(actuated: &[bool]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_iterator(
        actuated.len(),
        actuated.iter().map(|&a| if a { 1.0 } else { 0.0 }),
    ))
}

impl MechanicalSystem {
    pub fn builder(name: impl Into<String>, dof: usize, n_constraints: usize) -> SystemBuilder {
        SystemBuilder {
            name: name.into(),
            dof,
            n_constraints,
            mass_matrix: None,
            bias: None,
            constraint: None,
            jacobian: None,
            jacobian_rate: None,
            potential: None,
            actuation: None,
            metric: None,
            rank_tol: RankTolerance::Auto,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn n_constraints(&self) -> usize {
        self.n_constraints
    }

    pub fn actuation(&self) -> &DMatrix<f64> {
        &self.actuation
    }

    pub fn metric(&self) -> &MetricTensor {
        &self.metric
    }

    pub fn rank_tolerance(&self) -> RankTolerance {
        self.rank_tol
    }

    pub fn is_fully_actuated(&self) -> bool {
        self.actuation == DMatrix::identity(self.dof, self.dof)
    }

    pub fn with_actuation(mut self, b: DMatrix<f64>) -> Result<Self> {
        validate_selector(&b, self.dof)?;
        self.actuation = b;
        Ok(self)
    }

    pub fn with_metric(mut self, w: MetricTensor) -> Result<Self> {
        check_dim("metric", self.dof, w.dim())?;
        self.metric = w;
        Ok(self)
    }

    pub fn with_rank_tolerance(mut self, tol: RankTolerance) -> Self {
        self.rank_tol = tol;
        self
    }

    fn check_q(&self, q: &DVector<f64>) -> Result<()> {
        check_dim("generalized coordinates", self.dof, q.len())
    }

    pub fn mass_matrix(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_q(q)?;
        let m = (self.mass_matrix)(q)?;
        if m.shape() != (self.dof, self.dof) {
            return Err(Error::Model(format!("mass matrix has shape {:?}", m.shape())));
        }
        Ok(m)
    }

    pub fn bias(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_q(q)?;
        check_dim("generalized velocities", self.dof, qdot.len())?;
        let h = (self.bias)(q, qdot)?;
        check_dim("bias vector", self.dof, h.len())?;
        Ok(h)
    }

    pub fn constraint(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_q(q)?;
        let phi = (self.constraint)(q)?;
        check_dim("constraint vector", self.n_constraints, phi.len())?;
        Ok(phi)
    }

    pub fn constraint_norm(&self, q: &DVector<f64>) -> Result<f64> {
        Ok(self.constraint(q)?.norm())
    }

    /// `A = ∂Φ/∂q`, analytic when provided, otherwise central differences.
    pub fn jacobian(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_q(q)?;
        let a = match &self.jacobian {
            Some(j) => j(q)?,
            None => fd_jacobian(|x| (self.constraint)(x), q, default_fd_step(q))?,
        };
        if a.shape() != (self.n_constraints, self.dof) {
            return Err(Error::Model(format!("Jacobian has shape {:?}", a.shape())));
        }
        Ok(a)
    }

    pub fn jacobian_rate(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_q(q)?;
        check_dim("generalized velocities", self.dof, qdot.len())?;
        let adot = match &self.jacobian_rate {
            Some(j) => j(q, qdot)?,
            None => fd_jacobian_rate(|x| self.jacobian(x), q, qdot, default_fd_step(q))?,
        };
        if adot.shape() != (self.n_constraints, self.dof) {
            return Err(Error::Model(format!("Jacobian rate has shape {:?}", adot.shape())));
        }
        Ok(adot)
    }

    pub fn potential(&self, q: &DVector<f64>) -> Result<f64> {
        match &self.potential {
            Some(v) => v(q),
            None => Ok(0.0),
        }
    }

    pub fn kinetic_energy(&self, state: &GeneralizedState) -> Result<f64> {
        let m = self.mass_matrix(&state.q)?;
        Ok(0.5 * state.qdot.dot(&(m * &state.qdot)))
    }

    /// `½ q̇ᵀMq̇ + 𝓥(q)`.
    pub fn energy(&self, state: &GeneralizedState) -> Result<f64> {
        Ok(self.kinetic_energy(state)? + self.potential(&state.q)?)
    }
}

pub type TaskFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type TaskMatrixFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type TaskRateFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type ChartFn =
    Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> (DVector<f64>, DVector<f64>) + Send + Sync>;

/// Independent coordinates `θ` with embedding `q = ψ(θ)`, its Jacobian `Λ`
/// and rate `Λ̇`. The chart recovers `(θ, θ̇)` from `(q, q̇)`.
#[derive(Clone)]
pub struct TaskMap {
    pub dim: usize,
    pub embed: TaskFn,
    pub jacobian: TaskMatrixFn,
    pub jacobian_rate: TaskRateFn,
    pub chart: ChartFn,
}

impl fmt::Debug for TaskMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TaskMap").field("dim", &self.dim).finish_non_exhaustive()
    }
}

impl TaskMap {
    pub fn coordinates(&self, state: &GeneralizedState) -> (DVector<f64>, DVector<f64>) {
        (self.chart)(&state.q, &state.qdot)
    }

    /// Checks full column rank of `Λ`, `A(ψ(θ))·Λ(θ) = 0` and `Φ(ψ(θ)) = 0`
    /// at a sample `θ`. Returns the worst violations `(σ_min/σ_max, ‖AΛ‖, ‖Φ‖)`.
    pub fn audit(&self, sys: &MechanicalSystem, theta: &DVector<f64>) -> Result<(f64, f64, f64)> {
        let q = (self.embed)(theta);
        let lambda = (self.jacobian)(theta);
        let sv = singular_values(&lambda);
        let ratio = match (sv.first(), sv.last()) {
            (Some(&hi), Some(&lo)) if hi > 0.0 => lo / hi,
            _ => 0.0,
        };
        let range = (sys.jacobian(&q)? * &lambda).amax();
        let phi = sys.constraint_norm(&q)?;
        Ok((ratio, range, phi))
    }
}

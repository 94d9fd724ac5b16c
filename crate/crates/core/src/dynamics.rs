//! Direct dynamics of constrained systems through constraint inertia
//! matrices, constraint-force and multiplier recovery, and the classical
//! Lagrange-multiplier solution used as an independent oracle.
//!
//! The projected equation `PMq̈ = P(f - h)` has a singular left-hand side; it is
//! completed with the constraint-induced acceleration `(I - P)q̈ = Cq̇`. Each of
//! the three inertia variants below combines the two pieces differently and
//! all of them are invertible whenever `M` is positive definite, independently
//! of the rank of the constraint Jacobian.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::model::{GeneralizedState, MechanicalSystem};
use crate::projection::{curvature_product, numerical_rank, pseudo_inverse, spectral_norm, ProjectionData};

/// Constraint residual above which the dynamics log a warning.
pub const ON_MANIFOLD_WARN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum InertiaVariant {
    /// `M_c = M + PM - (PM)ᵀ`
    #[default]
    Skew,
    /// `M'_c = PMP + (I-P)M(I-P)`
    Symmetric,
    /// `M''_c = PM + γ(I-P)`; `None` selects `γ = ‖M‖₂`.
    Parameterized { gamma: Option<f64> },
}

/// `M_c = M + M̃` with the skew-symmetric `M̃ = PM - (PM)ᵀ`.
pub fn constraint_inertia_skew(m: &DMatrix<f64>, p: &DMatrix<f64>) -> DMatrix<f64> {
    let pm = p * m;
    m + &pm - pm.transpose()
}

/// `M'_c = PMP + (I-P)M(I-P)`, symmetric positive definite.
pub fn constraint_inertia_symmetric(m: &DMatrix<f64>, p: &DMatrix<f64>) -> DMatrix<f64> {
    let n = p.nrows();
    let ip = DMatrix::identity(n, n) - p;
    let out = p * m * p + &ip * m * &ip;
    (&out + out.transpose()) * 0.5
}

/// `M''_c = PM + γ(I-P)`.
pub fn constraint_inertia_parameterized(
    m: &DMatrix<f64>,
    p: &DMatrix<f64>,
    gamma: f64,
) -> Result<DMatrix<f64>> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    let n = p.nrows();
    Ok(p * m + (DMatrix::identity(n, n) - p) * gamma)
}

/// `true` iff `‖(I-P)MP‖₂ <= tol·‖M‖₂`, i.e. the null space of the
/// constraints is invariant under `M` and motion/force channels separate.
pub fn is_decoupled(m: &DMatrix<f64>, p: &DMatrix<f64>, tol: f64) -> bool {
    let n = p.nrows();
    let cross = (DMatrix::identity(n, n) - p) * m * p;
    spectral_norm(&cross) <= tol * spectral_norm(m)
}

/// Everything the projected dynamics need at one state.
#[derive(Debug, Clone)]
pub struct DynamicsContext {
    pub mass: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    pub jacobian_rate: DMatrix<f64>,
    pub projection: ProjectionData,
    /// `Cq̇ = -A⁺Ȧq̇`
    pub curvature: DVector<f64>,
    pub constraint_residual: f64,
    pub n_constraints: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintReaction {
    pub force: DVector<f64>,
    /// Minimum-norm multipliers `(Aᵀ)⁺𝓕`.
    pub multipliers: DVector<f64>,
    /// Whether `A` has full row rank, so that `λ` is unique.
    pub unique: bool,
    /// Cross-coupling map `μ = (I-P)·M·M_c⁻¹`.
    pub mu: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsSolution {
    pub qddot: DVector<f64>,
    pub constraint_force: DVector<f64>,
    pub multipliers: DVector<f64>,
    pub multipliers_unique: bool,
    pub mu: DMatrix<f64>,
    pub projector: DMatrix<f64>,
}

fn lu_solve(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    a.lu().solve(b).ok_or(Error::SingularInertia)
}

impl DynamicsContext {
    pub fn new(sys: &MechanicalSystem, state: &GeneralizedState) -> Result<Self> {
        Self::assemble(sys, state, true)
    }

    /// As [`DynamicsContext::new`]; `warn_off_manifold = false` silences the
    /// drift warning for intermediate integration stages.
    pub(crate) fn assemble(
        sys: &MechanicalSystem,
        state: &GeneralizedState,
        warn_off_manifold: bool,
    ) -> Result<Self> {
        check_dim("state", sys.dof(), state.dof())?;
        let (q, qd) = (&state.q, &state.qdot);
        let mass = sys.mass_matrix(q)?;
        let bias = sys.bias(q, qd)?;
        let jacobian = sys.jacobian(q)?;
        let jacobian_rate = sys.jacobian_rate(q, qd)?;
        let constraint_residual = sys.constraint_norm(q)?;
        if warn_off_manifold && constraint_residual > ON_MANIFOLD_WARN {
            warn!(
                "{}: state is off the constraint manifold (|phi| = {constraint_residual:e})",
                sys.name()
            );
        }
        let projection = pseudo_inverse(&jacobian, sys.rank_tolerance())?;
        let curvature = curvature_product(&projection, &jacobian_rate, qd)?;
        Ok(Self {
            mass,
            bias,
            jacobian,
            jacobian_rate,
            projection,
            curvature,
            constraint_residual,
            n_constraints: sys.n_constraints(),
        })
    }

    pub fn dof(&self) -> usize {
        self.mass.nrows()
    }

    pub fn projector(&self) -> &DMatrix<f64> {
        &self.projection.projector
    }

    /// `M_c` of the skew variant.
    pub fn skew_inertia(&self) -> DMatrix<f64> {
        constraint_inertia_skew(&self.mass, self.projector())
    }

    pub fn default_gamma(&self) -> f64 {
        spectral_norm(&self.mass)
    }

    /// Generalized acceleration for input force `f` using the chosen variant.
    pub fn acceleration(&self, f: &DVector<f64>, variant: InertiaVariant) -> Result<DVector<f64>> {
        check_dim("input force", self.dof(), f.len())?;
        let p = self.projector();
        let potent = p * (f - &self.bias);
        let m_cq = &self.mass * &self.curvature;
        match variant {
            InertiaVariant::Skew => lu_solve(self.skew_inertia(), &(potent + m_cq)),
            InertiaVariant::Symmetric => {
                let reflect = crate::projection::reflection(p);
                lu_solve(
                    constraint_inertia_symmetric(&self.mass, p),
                    &(potent + reflect * m_cq),
                )
            }
            InertiaVariant::Parameterized { gamma } => {
                let gamma = gamma.unwrap_or_else(|| self.default_gamma());
                let mc = constraint_inertia_parameterized(&self.mass, p, gamma)?;
                lu_solve(mc, &(potent + &self.curvature * gamma))
            }
        }
    }

    /// `μ = (I-P)·M·M_c⁻¹`.
    pub fn coupling(&self) -> Result<DMatrix<f64>> {
        let mc_inv = self.skew_inertia().try_inverse().ok_or(Error::SingularInertia)?;
        Ok(self.projection.complement() * &self.mass * mc_inv)
    }

    pub fn solve(&self, f: &DVector<f64>, variant: InertiaVariant) -> Result<DynamicsSolution> {
        let qddot = self.acceleration(f, variant)?;
        let reaction = constraint_force(self, f)?;
        Ok(DynamicsSolution {
            qddot,
            constraint_force: reaction.force,
            multipliers: reaction.multipliers,
            multipliers_unique: reaction.unique,
            mu: reaction.mu,
            projector: self.projector().clone(),
        })
    }
}

/// `𝓕 = (f⊥ - h⊥) - μ(f∥ - h∥) - μ·M·Cq̇` and the minimum-norm multipliers.
pub fn constraint_force(ctx: &DynamicsContext, f: &DVector<f64>) -> Result<ConstraintReaction> {
    check_dim("input force", ctx.dof(), f.len())?;
    let p = ctx.projector();
    let ip = ctx.projection.complement();
    let mu = ctx.coupling()?;
    let net = f - &ctx.bias;
    let force = &ip * &net - &mu * (p * &net) - &mu * (&ctx.mass * &ctx.curvature);
    let multipliers = ctx.projection.pinv.transpose() * &force;
    Ok(ConstraintReaction {
        force,
        multipliers,
        unique: ctx.projection.rank == ctx.n_constraints,
        mu,
    })
}

pub fn forward_dynamics(
    sys: &MechanicalSystem,
    state: &GeneralizedState,
    f: &DVector<f64>,
    variant: InertiaVariant,
) -> Result<DynamicsSolution> {
    DynamicsContext::new(sys, state)?.solve(f, variant)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalSolution {
    pub qddot: DVector<f64>,
    pub multipliers: DVector<f64>,
}

/// Textbook Lagrange-multiplier solution
/// `λ = (AM⁻¹Aᵀ)⁻¹[AM⁻¹(f - h) + Ȧq̇]`, `q̈ = M⁻¹(f - h - Aᵀλ)`.
///
/// Fails with [`Error::RankDeficient`] whenever `A` loses row rank (judged with
/// the system's rank tolerance), which is exactly where the projection method
/// keeps working.
pub fn forward_dynamics_classical(
    sys: &MechanicalSystem,
    state: &GeneralizedState,
    f: &DVector<f64>,
) -> Result<ClassicalSolution> {
    check_dim("input force", sys.dof(), f.len())?;
    let (q, qd) = (&state.q, &state.qdot);
    let m = sys.mass_matrix(q)?;
    let h = sys.bias(q, qd)?;
    let a = sys.jacobian(q)?;
    let adot = sys.jacobian_rate(q, qd)?;
    let rows = a.nrows();
    let rank = numerical_rank(&a, sys.rank_tolerance());
    if rank < rows {
        return Err(Error::RankDeficient { rank, rows });
    }
    let m_chol = m.cholesky().ok_or(Error::SingularInertia)?;
    let net = f - h;
    let minv_net = m_chol.solve(&net);
    let minv_at = m_chol.solve(&a.transpose());
    let cartesian = &a * &minv_at;
    let rhs = &a * &minv_net + &adot * qd;
    let lambda = cartesian
        .cholesky()
        .ok_or(Error::RankDeficient { rank, rows })?
        .solve(&rhs);
    let qddot = minv_net - minv_at * &lambda;
    Ok(ClassicalSolution {
        qddot,
        multipliers: lambda,
    })
}

//! Projected inverse-dynamics motion control, its weighted-norm variant,
//! constraint-force control, the hybrid motion/force law and the actuation
//! mapping for systems with passive joints.
//!
//! The motion channel lives in `𝓝(A)` and the force channel in its
//! orthogonal complement `𝓡(Aᵀ)`, so the two error dynamics
//! `ë + G_D ė + G_P e = 0` and `(I + G_F)ė_f + G_I e_f = 0` evolve
//! independently.

use std::sync::Arc;

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::dynamics::{constraint_force, DynamicsContext, DynamicsSolution};
use crate::error::{check_dim, Error, Result};
use crate::model::{GeneralizedState, MechanicalSystem, TaskMap};
use crate::projection::{pinv, singular_values, sorted_svd, weighted_projection, MetricTensor, RankTolerance};
use crate::sim::ForcePolicy;

/// Ratio `σ_min/σ_max` of `Λ` below which the task chart is considered singular.
pub const TASK_SINGULARITY_RATIO: f64 = 1e-8;

fn check_spd(name: &str, g: &DMatrix<f64>, k: usize) -> Result<()> {
    if g.shape() != (k, k) {
        return Err(Error::InvalidParameter(format!(
            "{name} must be {k}x{k}, got {}x{}",
            g.nrows(),
            g.ncols()
        )));
    }
    let scale = g.amax().max(f64::MIN_POSITIVE);
    if (g - g.transpose()).amax() > 1e-12 * scale {
        return Err(Error::InvalidParameter(format!("{name} is not symmetric")));
    }
    if g.iter().any(|x| !x.is_finite()) || g.clone().cholesky().is_none() {
        return Err(Error::InvalidParameter(format!("{name} is not positive definite")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionGains {
    pub gp: DMatrix<f64>,
    pub gd: DMatrix<f64>,
}

impl MotionGains {
    pub fn new(gp: DMatrix<f64>, gd: DMatrix<f64>) -> Result<Self> {
        let k = gp.nrows();
        check_spd("G_P", &gp, k)?;
        check_spd("G_D", &gd, k)?;
        Ok(Self { gp, gd })
    }

    pub fn isotropic(k: usize, gp: f64, gd: f64) -> Result<Self> {
        Self::new(DMatrix::identity(k, k) * gp, DMatrix::identity(k, k) * gd)
    }

    /// `G_P = ω²I`, `G_D = 2ωI`: double pole at `-ω`.
    pub fn critically_damped(k: usize, omega: f64) -> Result<Self> {
        Self::isotropic(k, omega * omega, 2.0 * omega)
    }

    pub fn dim(&self) -> usize {
        self.gp.nrows()
    }
}

/// Value, first and second derivative of a reference signal.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSample {
    pub value: DVector<f64>,
    pub rate: DVector<f64>,
    pub accel: DVector<f64>,
}

pub type ProfileFn = Arc<dyn Fn(f64) -> ProfileSample + Send + Sync>;

/// Built-in reference signals. All vector parameters share one length.
#[derive(Clone)]
pub enum Profile {
    Constant(DVector<f64>),
    /// `before` for `t < at`, `after` from `at` on.
    Step { before: DVector<f64>, after: DVector<f64>, at: f64 },
    /// `offset + amplitude·sin(ω t + phase)`, component-wise.
    Sinusoid {
        offset: DVector<f64>,
        amplitude: DVector<f64>,
        omega: f64,
        phase: f64,
    },
    /// Quintic point-to-point move with zero boundary rates and accelerations.
    Quintic {
        start: DVector<f64>,
        end: DVector<f64>,
        t0: f64,
        duration: f64,
    },
    Custom { dim: usize, eval: ProfileFn },
}

impl std::fmt::Debug for Profile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Profile::Constant(v) => f.debug_tuple("Constant").field(&v.as_slice()).finish(),
            Profile::Step { at, .. } => f.debug_struct("Step").field("at", at).finish_non_exhaustive(),
            Profile::Sinusoid { omega, .. } => {
                f.debug_struct("Sinusoid").field("omega", omega).finish_non_exhaustive()
            }
            Profile::Quintic { t0, duration, .. } => f
                .debug_struct("Quintic")
                .field("t0", t0)
                .field("duration", duration)
                .finish_non_exhaustive(),
            Profile::Custom { dim, .. } => f.debug_struct("Custom").field("dim", dim).finish_non_exhaustive(),
        }
    }
}

impl Profile {
    pub fn dim(&self) -> usize {
        match self {
            Profile::Constant(v) => v.len(),
            Profile::Step { before, .. } => before.len(),
            Profile::Sinusoid { offset, .. } => offset.len(),
            Profile::Quintic { start, .. } => start.len(),
            Profile::Custom { dim, .. } => *dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.dim();
        let same = |v: &DVector<f64>| v.len() == k && v.iter().all(|x| x.is_finite());
        let ok = match self {
            Profile::Constant(v) => same(v),
            Profile::Step { after, at, .. } => same(after) && at.is_finite(),
            Profile::Sinusoid {
                offset,
                amplitude,
                omega,
                phase,
            } => same(offset) && same(amplitude) && omega.is_finite() && phase.is_finite(),
            Profile::Quintic {
                start,
                end,
                t0,
                duration,
            } => same(start) && same(end) && t0.is_finite() && *duration > 0.0,
            Profile::Custom { .. } => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("inconsistent reference profile {self:?}")))
        }
    }

    pub fn sample(&self, t: f64) -> ProfileSample {
        let zeros = || DVector::zeros(self.dim());
        match self {
            Profile::Constant(v) => ProfileSample {
                value: v.clone(),
                rate: zeros(),
                accel: zeros(),
            },
            Profile::Step { before, after, at } => ProfileSample {
                value: if t < *at { before.clone() } else { after.clone() },
                rate: zeros(),
                accel: zeros(),
            },
            Profile::Sinusoid {
                offset,
                amplitude,
                omega,
                phase,
            } => {
                let (s, c) = (omega * t + phase).sin_cos();
                ProfileSample {
                    value: offset + amplitude * s,
                    rate: amplitude * (omega * c),
                    accel: amplitude * (-omega * omega * s),
                }
            }
            Profile::Quintic {
                start,
                end,
                t0,
                duration,
            } => {
                let tau = ((t - t0) / duration).clamp(0.0, 1.0);
                let (t2, t3) = (tau * tau, tau * tau * tau);
                let s = t3 * (10.0 - 15.0 * tau + 6.0 * t2);
                let (ds, dds) = if t < *t0 || t > t0 + duration {
                    (0.0, 0.0)
                } else {
                    (
                        30.0 * t2 * (1.0 - tau) * (1.0 - tau) / duration,
                        60.0 * tau * (1.0 - tau) * (1.0 - 2.0 * tau) / (duration * duration),
                    )
                };
                let delta = end - start;
                ProfileSample {
                    value: start + &delta * s,
                    rate: &delta * ds,
                    accel: delta * dds,
                }
            }
            Profile::Custom { eval, .. } => eval(t),
        }
    }

    /// Index of the continuous piece containing `t`; it changes exactly at
    /// discontinuities of the signal.
    pub fn segment(&self, t: f64) -> u32 {
        match self {
            Profile::Step { at, .. } => u32::from(t >= *at),
            _ => 0,
        }
    }
}

/// Desired trajectory `θ_d(t)` of the independent coordinates.
#[derive(Debug, Clone)]
pub struct DesiredMotion(pub Profile);

impl DesiredMotion {
    pub fn regulate(theta: DVector<f64>) -> Self {
        Self(Profile::Constant(theta))
    }

    pub fn sample(&self, t: f64) -> ProfileSample {
        self.0.sample(t)
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }
}

/// Motion-channel quantities at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionTerms {
    /// `u_p = Λ̇θ̇ + Λ(θ̈_d + G_D ė_p + G_P e_p)`
    pub u: DVector<f64>,
    /// `e_p = θ_d - θ`
    pub error: DVector<f64>,
    pub error_rate: DVector<f64>,
}

/// Reference acceleration `u_p` of the projected inverse-dynamics law.
pub fn motion_terms(
    state: &GeneralizedState,
    task: &TaskMap,
    desired: &DesiredMotion,
    gains: &MotionGains,
    t: f64,
) -> Result<MotionTerms> {
    check_dim("desired trajectory", task.dim, desired.dim())?;
    check_dim("motion gains", task.dim, gains.dim())?;
    let (theta, theta_dot) = task.coordinates(state);
    let lambda = (task.jacobian)(&theta);
    check_dim("task jacobian rows", state.dof(), lambda.nrows())?;
    let sv = singular_values(&lambda);
    let (sigma_max, sigma_min) = (sv.first().copied().unwrap_or(0.0), sv.last().copied().unwrap_or(0.0));
    if sv.len() < task.dim || sigma_min.is_nan() || sigma_min <= TASK_SINGULARITY_RATIO * sigma_max {
        return Err(Error::TaskSingularity { sigma_min, sigma_max });
    }
    let lambda_dot = (task.jacobian_rate)(&theta, &theta_dot);
    let d = desired.sample(t);
    let error = &d.value - &theta;
    let error_rate = &d.rate - &theta_dot;
    let u = lambda_dot * &theta_dot + lambda * (d.accel + &gains.gd * &error_rate + &gains.gp * &error);
    Ok(MotionTerms { u, error, error_rate })
}

/// `f_∥ = P(h + M u_p)` given a dynamics context.
pub fn pidc_from(ctx: &DynamicsContext, u: &DVector<f64>) -> DVector<f64> {
    ctx.projector() * (&ctx.bias + &ctx.mass * u)
}

/// Projected inverse-dynamics control `f_∥ = h_∥ + PMu_p`.
///
/// The command lies in `𝓝(A)` and is the minimum-norm input producing the
/// feedback-linearized motion.
pub fn pidc(
    sys: &MechanicalSystem,
    state: &GeneralizedState,
    task: &TaskMap,
    desired: &DesiredMotion,
    gains: &MotionGains,
    t: f64,
) -> Result<DVector<f64>> {
    let terms = motion_terms(state, task, desired, gains, t)?;
    let ctx = DynamicsContext::new(sys, state)?;
    Ok(pidc_from(&ctx, &terms.u))
}

/// `f = W^{1/2} P_W W^{-1/2}(h + M u_p)`: among all inputs producing the same
/// motion as [`pidc`], the one of least `‖f‖_W`.
pub fn weighted_pidc_from(
    ctx: &DynamicsContext,
    u: &DVector<f64>,
    w: &MetricTensor,
    tol: RankTolerance,
) -> Result<DVector<f64>> {
    check_dim("metric", ctx.dof(), w.dim())?;
    let pw = weighted_projection(&ctx.jacobian, w, tol)?;
    let g = &ctx.bias + &ctx.mass * u;
    Ok(&w.sqrt_weight * (pw.projector * (&w.inv_sqrt_weight * g)))
}

pub fn weighted_pidc(
    sys: &MechanicalSystem,
    state: &GeneralizedState,
    task: &TaskMap,
    desired: &DesiredMotion,
    gains: &MotionGains,
    w: &MetricTensor,
    t: f64,
) -> Result<DVector<f64>> {
    let terms = motion_terms(state, task, desired, gains, t)?;
    let ctx = DynamicsContext::new(sys, state)?;
    weighted_pidc_from(&ctx, &terms.u, w, sys.rank_tolerance())
}

/// Which curvature term the force law compensates through `μ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ForceLaw {
    /// `μ(f_∥ - h_∥ + Cq̇)`, the law in its customary form.
    #[default]
    Standard,
    /// `μ(f_∥ - h_∥ + C_c q̇)` with `C_c q̇ = M·Cq̇`, which cancels the
    /// constraint-force equation exactly.
    Consistent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForceGains {
    pub gf: DMatrix<f64>,
    pub gi: DMatrix<f64>,
    /// Trapezoidal `∫e_f dτ`, clamped component-wise at `windup_limit`.
    pub integral_state: DVector<f64>,
    pub windup_limit: Option<f64>,
    pub law: ForceLaw,
    last_error: Option<DVector<f64>>,
    last_target: Option<DVector<f64>>,
}

impl ForceGains {
    pub fn new(gf: DMatrix<f64>, gi: DMatrix<f64>) -> Result<Self> {
        let n = gf.nrows();
        check_spd("G_F", &gf, n)?;
        check_spd("G_I", &gi, n)?;
        Ok(Self {
            gf,
            gi,
            integral_state: DVector::zeros(n),
            windup_limit: None,
            law: ForceLaw::default(),
            last_error: None,
            last_target: None,
        })
    }

    pub fn isotropic(n: usize, gf: f64, gi: f64) -> Result<Self> {
        Self::new(DMatrix::identity(n, n) * gf, DMatrix::identity(n, n) * gi)
    }

    pub fn with_windup_limit(mut self, limit: f64) -> Result<Self> {
        if limit.is_nan() || limit <= 0.0 {
            return Err(Error::InvalidParameter(format!("windup limit must be positive, got {limit}")));
        }
        self.windup_limit = Some(limit);
        Ok(self)
    }

    pub fn with_law(mut self, law: ForceLaw) -> Self {
        self.law = law;
        self
    }

    pub fn dim(&self) -> usize {
        self.gf.nrows()
    }

    /// Scalar time constant of `(I + G_F)ė + G_I e = 0` for isotropic gains.
    pub fn time_constant(&self) -> f64 {
        (1.0 + self.gf[(0, 0)]) / self.gi[(0, 0)]
    }

    pub fn reset(&mut self) {
        self.integral_state.fill(0.0);
        self.last_error = None;
    }

    fn clamp(&self, mut v: DVector<f64>) -> DVector<f64> {
        if let Some(lim) = self.windup_limit {
            v.apply(|x| *x = x.clamp(-lim, lim));
        }
        v
    }

    /// Integral after accumulating `error` over the last interval; a fresh or
    /// reset integrator starts from zero at the current sample.
    fn integral_after(&self, error: &DVector<f64>, dt: f64, reset: bool) -> DVector<f64> {
        match (&self.last_error, reset) {
            (Some(prev), false) => self.clamp(&self.integral_state + (prev + error) * (0.5 * dt)),
            _ => DVector::zeros(self.dim()),
        }
    }

    /// Accepts `error` as the force error of the current sample.
    pub fn commit(&mut self, error: &DVector<f64>, dt: f64, reset: bool) {
        self.integral_state = self.integral_after(error, dt, reset);
        self.last_error = Some(error.clone());
    }
}

/// How the force error of the current sample is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForceFeedback<'a> {
    /// A measured constraint force; `e_f = 𝓕_d - 𝓕`.
    Measured(&'a DVector<f64>),
    /// The part of the constraint force not explained by the model (an
    /// estimate from the previous sample). The direct feedthrough of `f_⊥`
    /// into `𝓕` is solved for implicitly, which realizes the continuous-time
    /// loop without a one-sample delay.
    Feedthrough { unmodeled: &'a DVector<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForceCommand {
    pub f_perp: DVector<f64>,
    pub error: DVector<f64>,
    pub u_f: DVector<f64>,
}

/// Projects a desired constraint force onto `𝓡(Aᵀ)`, warning when this
/// changes it.
pub fn admissible_force(ctx: &DynamicsContext, desired: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim("desired force", ctx.dof(), desired.len())?;
    let projected = ctx.projection.complement() * desired;
    if (&projected - desired).norm() > 1e-9 * (1.0 + desired.norm()) {
        warn!("desired constraint force is not in the range of A^T; using its projection");
    }
    Ok(projected)
}

/// `f_⊥ = h_⊥ + μ(f_∥ - h_∥ + c) + (I-P)u_𝓕` with
/// `u_𝓕 = 𝓕_d + G_F e_f + G_I ∫e_f`. Does not modify `gains`.
pub fn force_command(
    ctx: &DynamicsContext,
    f_par: &DVector<f64>,
    target: &DVector<f64>,
    feedback: ForceFeedback<'_>,
    gains: &ForceGains,
    reset: bool,
    dt: f64,
) -> Result<ForceCommand> {
    let n = ctx.dof();
    check_dim("force gains", n, gains.dim())?;
    check_dim("potent force", n, f_par.len())?;
    let p = ctx.projector();
    let ip = ctx.projection.complement();
    let mu = ctx.coupling()?;
    let curvature = match gains.law {
        ForceLaw::Standard => ctx.curvature.clone(),
        ForceLaw::Consistent => &ctx.mass * &ctx.curvature,
    };
    let base = &ip * &ctx.bias + &mu * (f_par - p * &ctx.bias + curvature);

    let error = match feedback {
        ForceFeedback::Measured(measured) => {
            check_dim("measured force", n, measured.len())?;
            &ip * (target - measured)
        }
        ForceFeedback::Feedthrough { unmodeled } => {
            check_dim("unmodeled force", n, unmodeled.len())?;
            // 𝓕 = 𝓕(f_∥ + base) + r + (I-P)u_𝓕(e), e = 𝓕_d - 𝓕, solved for e.
            let (weight, carried) = match (&gains.last_error, reset) {
                (Some(prev), false) => (0.5 * dt, &gains.integral_state + prev * (0.5 * dt)),
                _ => (0.0, DVector::zeros(n)),
            };
            let predicted = constraint_force(ctx, &(f_par + &base))?.force + unmodeled;
            let lhs = DMatrix::identity(n, n) + &ip * (&gains.gf + &gains.gi * weight);
            let rhs = -&ip * (predicted + &gains.gi * carried);
            let e = lhs.lu().solve(&rhs).ok_or_else(|| {
                Error::InvalidParameter("force feedback loop is not solvable with these gains".into())
            })?;
            &ip * e
        }
    };
    let integral = gains.integral_after(&error, dt, reset);
    let u_f = target + &gains.gf * &error + &gains.gi * integral;
    let f_perp = base + &ip * &u_f;
    Ok(ForceCommand { f_perp, error, u_f })
}

/// Constraint-force control with a measured force. Advances the integral
/// state; a changed target resets it.
pub fn force_control(
    sys: &MechanicalSystem,
    state: &GeneralizedState,
    f_par: &DVector<f64>,
    desired_force: &DVector<f64>,
    measured_force: &DVector<f64>,
    gains: &mut ForceGains,
    dt: f64,
) -> Result<DVector<f64>> {
    let ctx = DynamicsContext::new(sys, state)?;
    let target = admissible_force(&ctx, desired_force)?;
    let reset = gains.last_target.as_ref().is_some_and(|prev| *prev != target);
    let cmd = force_command(&ctx, f_par, &target, ForceFeedback::Measured(measured_force), gains, reset, dt)?;
    gains.commit(&cmd.error, dt, reset);
    gains.last_target = Some(target);
    Ok(cmd.f_perp)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridCommand {
    pub f: DVector<f64>,
    pub f_par: DVector<f64>,
    pub f_perp: DVector<f64>,
}

/// `f = h + μCq̇ + (I + μ)PMu_p + u_𝓕`, assembled as the sum of the motion
/// command and the force command.
#[allow(clippy::too_many_arguments)]
pub fn hybrid_control(
    sys: &MechanicalSystem,
    state: &GeneralizedState,
    task: &TaskMap,
    desired: &DesiredMotion,
    motion_gains: &MotionGains,
    desired_force: &DVector<f64>,
    measured_force: &DVector<f64>,
    force_gains: &mut ForceGains,
    t: f64,
    dt: f64,
) -> Result<HybridCommand> {
    let f_par = pidc(sys, state, task, desired, motion_gains, t)?;
    let f_perp = force_control(sys, state, &f_par, desired_force, measured_force, force_gains, dt)?;
    Ok(HybridCommand {
        f: &f_par + &f_perp,
        f_par,
        f_perp,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassiveJointMap {
    /// `H = -(I-P)Q⁺(I-B)` with `Q = I - B - P + BP`.
    pub h: DMatrix<f64>,
    pub feasible: bool,
}

/// Singular-value cutoff for `Q⁺` that matches the angle criterion of
/// [`controllability_check`]: both treat `𝓝` and `𝓑⊥` as intersecting when
/// their smallest principal angle `φ` has `cos φ ≥ 1 - tol`.
fn passive_cutoff(tol: f64) -> f64 {
    (2.0 * tol - tol * tol).max(0.0).sqrt()
}

/// Map `f_∥ ↦ Hf_∥` cancelling the passive rows of `f_∥` with an impotent
/// force, and whether that is possible for every `f_∥ ∈ 𝓝(A)`.
pub fn passive_joint_map(p: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> Result<PassiveJointMap> {
    let n = p.nrows();
    check_dim("projector", n, p.ncols())?;
    check_dim("actuation selector", n, b.nrows())?;
    check_dim("actuation selector", n, b.ncols())?;
    let id = DMatrix::identity(n, n);
    let ib = &id - b;
    let q = &ib - p + b * p;
    let q_pinv = pinv(&q, RankTolerance::Absolute(passive_cutoff(tol)));
    let h = -(&id - p) * &q_pinv * &ib;
    let range_residual = &id - &q * &q_pinv;
    let demand = &ib * p;
    let feasible = demand.column_iter().all(|v| {
        let v = v.clone_owned();
        (&range_residual * &v).norm() <= tol * (1.0 + v.norm())
    });
    Ok(PassiveJointMap { h, feasible })
}

/// `f = (I + H)f_∥`; fails with [`Error::Uncontrollable`] for an infeasible map.
pub fn passive_joint_control(f_par: &DVector<f64>, map: &PassiveJointMap) -> Result<DVector<f64>> {
    if !map.feasible {
        return Err(Error::Uncontrollable);
    }
    check_dim("potent force", map.h.nrows(), f_par.len())?;
    Ok(f_par + &map.h * f_par)
}

/// Tests `𝓝 ∩ 𝓑⊥ ⊆ 𝓝⊥ ∩ 𝓑⊥`. A basis of `𝓝 ∩ 𝓑⊥` is read off the right
/// singular vectors of `P(I-B)` with singular value one (within `tol`), and
/// each basis vector is checked for membership in `𝓝⊥ ∩ 𝓑⊥`.
pub fn controllability_check(p: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> Result<bool> {
    let n = p.nrows();
    check_dim("projector", n, p.ncols())?;
    check_dim("actuation selector", n, b.nrows())?;
    let product = p * (DMatrix::identity(n, n) - b);
    let svd = sorted_svd(&product);
    for (i, &s) in svd.sigma.iter().enumerate() {
        if s >= 1.0 - tol {
            let v = svd.v.column(i).clone_owned();
            if (p * &v).norm() > tol || (b * &v).norm() > tol {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// How a motion controller distributes its command over the force space.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Weighting {
    /// Minimum Euclidean norm.
    #[default]
    Euclidean,
    /// Minimum `‖f‖_W`.
    Metric(MetricTensor),
}

/// Projected inverse-dynamics controller as a simulation force policy.
/// Passive joints declared by the system's actuation selector are handled
/// through [`passive_joint_map`].
#[derive(Debug, Clone)]
pub struct MotionController {
    pub task: TaskMap,
    pub desired: DesiredMotion,
    pub gains: MotionGains,
    pub weighting: Weighting,
    pub passive_tol: f64,
}

impl MotionController {
    pub fn new(task: TaskMap, desired: DesiredMotion, gains: MotionGains) -> Result<Self> {
        check_dim("desired trajectory", task.dim, desired.dim())?;
        check_dim("motion gains", task.dim, gains.dim())?;
        desired.0.validate()?;
        Ok(Self {
            task,
            desired,
            gains,
            weighting: Weighting::Euclidean,
            passive_tol: 1e-8,
        })
    }

    pub fn with_weighting(mut self, weighting: Weighting) -> Self {
        self.weighting = weighting;
        self
    }

    /// Motion command at `state` from an already assembled context.
    pub fn command(
        &self,
        sys: &MechanicalSystem,
        ctx: &DynamicsContext,
        state: &GeneralizedState,
    ) -> Result<DVector<f64>> {
        let terms = motion_terms(state, &self.task, &self.desired, &self.gains, state.t)?;
        let f = match &self.weighting {
            Weighting::Euclidean => pidc_from(ctx, &terms.u),
            Weighting::Metric(w) => weighted_pidc_from(ctx, &terms.u, w, sys.rank_tolerance())?,
        };
        if sys.is_fully_actuated() {
            return Ok(f);
        }
        let map = passive_joint_map(ctx.projector(), sys.actuation(), self.passive_tol)?;
        passive_joint_control(&f, &map)
    }

    pub fn tracking_error(&self, state: &GeneralizedState) -> DVector<f64> {
        let (theta, _) = self.task.coordinates(state);
        self.desired.sample(state.t).value - theta
    }
}

impl ForcePolicy for MotionController {
    fn force(&mut self, sys: &MechanicalSystem, state: &GeneralizedState) -> Result<DVector<f64>> {
        let ctx = DynamicsContext::new(sys, state)?;
        self.command(sys, &ctx, state)
    }
}

/// Desired constraint force, either in multiplier space (`𝓕_d = Aᵀλ_d`) or
/// directly as a generalized force.
#[derive(Debug, Clone)]
pub enum ForceTarget {
    Multipliers(Profile),
    Generalized(Profile),
}

impl ForceTarget {
    fn profile(&self) -> &Profile {
        match self {
            ForceTarget::Multipliers(p) | ForceTarget::Generalized(p) => p,
        }
    }

    pub fn evaluate(&self, ctx: &DynamicsContext, t: f64) -> Result<DVector<f64>> {
        let v = self.profile().sample(t).value;
        match self {
            ForceTarget::Multipliers(_) => {
                check_dim("desired multipliers", ctx.jacobian.nrows(), v.len())?;
                Ok(ctx.jacobian.transpose() * v)
            }
            ForceTarget::Generalized(_) => admissible_force(ctx, &v),
        }
    }

    pub fn segment(&self, t: f64) -> u32 {
        self.profile().segment(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeedbackMode {
    /// Solve the `f_⊥ → 𝓕` feedthrough implicitly (see [`ForceFeedback`]).
    #[default]
    Feedthrough,
    /// Use the constraint force measured one step earlier. Stable only for
    /// small `G_F`.
    Delayed,
}

/// Hybrid motion/force controller as a simulation force policy. Without a
/// motion part it applies pure force control on top of `f_∥ = h_∥`.
#[derive(Debug, Clone)]
pub struct HybridController {
    pub motion: Option<MotionController>,
    pub target: ForceTarget,
    pub gains: ForceGains,
    pub mode: FeedbackMode,
    unmodeled: Option<DVector<f64>>,
    measured: Option<DVector<f64>>,
    segment: Option<u32>,
    // step length, learned from the simulator; the first sample needs none
    sample_time: f64,
    /// Force error recorded at every accepted step, `(t, e_f)`.
    pub error_history: Vec<(f64, DVector<f64>)>,
}

impl HybridController {
    pub fn new(motion: Option<MotionController>, target: ForceTarget, gains: ForceGains) -> Result<Self> {
        target.profile().validate()?;
        Ok(Self {
            motion,
            target,
            gains,
            mode: FeedbackMode::default(),
            unmodeled: None,
            measured: None,
            segment: None,
            sample_time: 0.0,
            error_history: Vec::new(),
        })
    }

    pub fn with_mode(mut self, mode: FeedbackMode) -> Self {
        self.mode = mode;
        self
    }

    fn potent(&self, sys: &MechanicalSystem, ctx: &DynamicsContext, state: &GeneralizedState) -> Result<DVector<f64>> {
        match &self.motion {
            Some(m) => m.command(sys, ctx, state),
            None => Ok(ctx.projector() * &ctx.bias),
        }
    }

    fn command(
        &self,
        sys: &MechanicalSystem,
        ctx: &DynamicsContext,
        state: &GeneralizedState,
    ) -> Result<(DVector<f64>, ForceCommand, bool)> {
        let f_par = self.potent(sys, ctx, state)?;
        let target = self.target.evaluate(ctx, state.t)?;
        let reset = self.segment.is_some_and(|s| s != self.target.segment(state.t));
        let zero = DVector::zeros(ctx.dof());
        let feedback = match (self.mode, &self.measured) {
            (FeedbackMode::Delayed, Some(m)) => ForceFeedback::Measured(m),
            (FeedbackMode::Delayed, None) => ForceFeedback::Measured(&target),
            (FeedbackMode::Feedthrough, _) => ForceFeedback::Feedthrough {
                unmodeled: self.unmodeled.as_ref().unwrap_or(&zero),
            },
        };
        let cmd = force_command(ctx, &f_par, &target, feedback, &self.gains, reset, self.sample_time)?;
        Ok((f_par, cmd, reset))
    }
}

impl ForcePolicy for HybridController {
    fn force(&mut self, sys: &MechanicalSystem, state: &GeneralizedState) -> Result<DVector<f64>> {
        let ctx = DynamicsContext::new(sys, state)?;
        let (f_par, cmd, _) = self.command(sys, &ctx, state)?;
        Ok(f_par + cmd.f_perp)
    }

    fn end_step(
        &mut self,
        sys: &MechanicalSystem,
        state: &GeneralizedState,
        applied: &DVector<f64>,
        solution: &DynamicsSolution,
        dt: f64,
    ) -> Result<()> {
        let ctx = DynamicsContext::new(sys, state)?;
        let target = self.target.evaluate(&ctx, state.t)?;
        let segment = self.target.segment(state.t);
        let reset = self.segment.is_some_and(|s| s != segment);
        let measured = &solution.constraint_force;
        let error = ctx.projection.complement() * (&target - measured);
        self.gains.commit(&error, dt, reset);
        self.sample_time = dt;
        self.unmodeled = Some(measured - constraint_force(&ctx, applied)?.force);
        self.measured = Some(measured.clone());
        self.segment = Some(segment);
        self.error_history.push((state.t, error));
        Ok(())
    }
}

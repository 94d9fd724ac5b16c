//! Declarative scenario files (TOML) and their translation into a system,
//! an initial state, a simulation config and a force policy.

use std::path::Path;

use nalgebra::DVector;
use serde::Deserialize;

use projdyn::control::{
    DesiredMotion, FeedbackMode, ForceGains, ForceLaw, ForceTarget, HybridController, MotionController, MotionGains,
    Profile, Weighting,
};
use projdyn::model::actuation_selector;
use projdyn::model::circle::{circle_task, make_particle_on_circle, polar_state};
use projdyn::model::slider_crank::{branch_state, make_slider_crank, slider_crank_task};
use projdyn::sim::{ConstantForce, Disturbed, ForcePolicy, Integrator, SimConfig};
use projdyn::{
    DynamicsSolution, GeneralizedState, InertiaVariant, MechanicalSystem, MetricTensor, RankTolerance, TaskMap,
};

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub model: ModelSpec,
    pub initial: InitialSpec,
    pub sim: SimSpec,
    #[serde(default)]
    pub controller: ControllerSpec,
    pub force: Option<ForceSpec>,
    pub disturbance: Option<DisturbanceSpec>,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub compare: CompareSpec,
    #[serde(default)]
    pub expect: Expectations,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    ParticleOnCircle,
    SliderCrank,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: ModelName,
    #[serde(default = "one")]
    pub mass: f64,
    /// Circle radius.
    #[serde(default = "one")]
    pub radius: f64,
    /// Slider-crank link length.
    #[serde(default = "one")]
    pub length: f64,
    #[serde(default = "standard_gravity")]
    pub gravity: f64,
    /// Absolute singular-value cutoff; relative machine-precision cutoff if absent.
    pub rank_tol: Option<f64>,
    /// Actuated joints; all joints are actuated if absent.
    pub actuated: Option<Vec<bool>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub q: Option<Vec<f64>>,
    pub qdot: Option<Vec<f64>>,
    /// Task coordinate, an alternative to `q`: the polar angle on the circle,
    /// the crank angle on the main assembly branch of the slider-crank.
    pub theta: Option<f64>,
    #[serde(default)]
    pub theta_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorName {
    #[default]
    Rk4,
    SemiImplicitEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantName {
    #[default]
    Skew,
    Symmetric,
    Parameterized,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub integrator: IntegratorName,
    #[serde(default)]
    pub variant: VariantName,
    /// Weight of the parameterized inertia; `‖M‖₂` if absent.
    pub gamma: Option<f64>,
    pub nr_tol: Option<f64>,
    pub nr_max_iter: Option<usize>,
    pub correction_every: Option<usize>,
}

/// A scalar or a vector in a scenario file.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Values {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Values {
    fn to_vector(&self) -> DVector<f64> {
        match self {
            Values::Scalar(x) => DVector::from_element(1, *x),
            Values::Vector(v) => DVector::from_column_slice(v),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSpec {
    Constant {
        value: Values,
    },
    Step {
        before: Values,
        after: Values,
        at: f64,
    },
    Sinusoid {
        offset: Values,
        amplitude: Values,
        omega: f64,
        #[serde(default)]
        phase: f64,
    },
    Quintic {
        start: Values,
        end: Values,
        #[serde(default)]
        t0: f64,
        duration: f64,
    },
}

impl ProfileSpec {
    pub fn to_profile(&self) -> Profile {
        match self {
            ProfileSpec::Constant { value } => Profile::Constant(value.to_vector()),
            ProfileSpec::Step { before, after, at } => Profile::Step {
                before: before.to_vector(),
                after: after.to_vector(),
                at: *at,
            },
            ProfileSpec::Sinusoid {
                offset,
                amplitude,
                omega,
                phase,
            } => Profile::Sinusoid {
                offset: offset.to_vector(),
                amplitude: amplitude.to_vector(),
                omega: *omega,
                phase: *phase,
            },
            ProfileSpec::Quintic { start, end, t0, duration } => Profile::Quintic {
                start: start.to_vector(),
                end: end.to_vector(),
                t0: *t0,
                duration: *duration,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    #[default]
    None,
    Constant,
    Pidc,
    WeightedPidc,
    Hybrid,
    Force,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSpec {
    #[serde(default)]
    pub kind: ControllerKind,
    /// Generalized force for `kind = "constant"`.
    pub force: Option<Vec<f64>>,
    pub gp: Option<f64>,
    pub gd: Option<f64>,
    /// Critically damped gains with poles at `-omega`; alternative to `gp`/`gd`.
    pub omega: Option<f64>,
    pub trajectory: Option<ProfileSpec>,
    /// Characteristic length for `weighted_pidc`, with `length_coordinates`
    /// marking the coordinates measured in length units.
    pub kappa: Option<f64>,
    pub length_coordinates: Option<Vec<bool>>,
    /// Explicit diagonal metric for `weighted_pidc`.
    pub weights: Option<Vec<f64>>,
    pub passive_tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawName {
    #[default]
    Standard,
    Consistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackName {
    #[default]
    Feedthrough,
    Delayed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSpace {
    #[default]
    Multipliers,
    Generalized,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForceSpec {
    pub gf: f64,
    pub gi: f64,
    #[serde(default)]
    pub law: LawName,
    #[serde(default)]
    pub feedback: FeedbackName,
    #[serde(default)]
    pub space: TargetSpace,
    pub windup_limit: Option<f64>,
    pub target: ProfileSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSpec {
    /// Constant generalized load the controller does not model.
    pub load: Vec<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Output directory; `--out` takes precedence.
    pub dir: Option<String>,
    pub csv: Option<String>,
    pub report: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSpec {
    /// Random states checked in addition to the trajectory.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Seed of the random states; `--seed` takes precedence.
    #[serde(default)]
    pub seed: u64,
}

impl Default for CompareSpec {
    fn default() -> Self {
        Self {
            samples: default_samples(),
            seed: 0,
        }
    }
}

/// Optional pass/fail thresholds checked after a run or comparison.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    pub max_constraint_norm: Option<f64>,
    pub max_energy_drift: Option<f64>,
    pub final_tracking_error: Option<f64>,
    pub final_force_error: Option<f64>,
    pub max_classical_delta: Option<f64>,
    pub max_variant_delta: Option<f64>,
    pub min_classical_failures: Option<usize>,
    pub max_projection_failures: Option<usize>,
}

fn one() -> f64 {
    1.0
}

fn standard_gravity() -> f64 {
    9.81
}

fn default_samples() -> usize {
    200
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn build(&self) -> Result<Setup, CliError> {
        let (system, task) = self.model.build()?;
        let initial = self.initial.build(&self.model, system.dof())?;
        let config = self.sim.build()?;
        let (policy, desired) = self.policy(&system, &task)?;
        let load = match &self.disturbance {
            Some(d) => {
                dims("disturbance.load", system.dof(), d.load.len())?;
                DVector::from_column_slice(&d.load)
            }
            None => DVector::zeros(system.dof()),
        };
        Ok(Setup {
            system,
            task,
            initial,
            config,
            desired,
            policy: Disturbed { inner: policy, load },
        })
    }

    fn policy(&self, sys: &MechanicalSystem, task: &TaskMap) -> Result<(Policy, Option<DesiredMotion>), CliError> {
        let c = &self.controller;
        let needs_force = matches!(c.kind, ControllerKind::Hybrid | ControllerKind::Force);
        if needs_force != self.force.is_some() {
            return Err(CliError::Config(if needs_force {
                format!("missing section [force] required by controller kind {:?}", c.kind)
            } else {
                "section [force] needs controller kind \"hybrid\" or \"force\"".into()
            }));
        }
        let motion = match c.kind {
            ControllerKind::Pidc | ControllerKind::WeightedPidc | ControllerKind::Hybrid => {
                Some(self.motion_controller(sys, task)?)
            }
            _ => None,
        };
        let desired = motion.as_ref().map(|m| m.desired.clone());
        let policy = match c.kind {
            ControllerKind::None => Policy::Zero,
            ControllerKind::Constant => {
                let f = c.force.as_ref().ok_or_else(|| missing("controller.force"))?;
                dims("controller.force", sys.dof(), f.len())?;
                Policy::Constant(ConstantForce(DVector::from_column_slice(f)))
            }
            ControllerKind::Pidc | ControllerKind::WeightedPidc => Policy::Motion(Box::new(motion.unwrap())),
            ControllerKind::Hybrid | ControllerKind::Force => {
                let spec = self.force.as_ref().unwrap();
                Policy::Hybrid(Box::new(spec.build(motion, sys.dof())?))
            }
        };
        Ok((policy, desired))
    }

    fn motion_controller(&self, sys: &MechanicalSystem, task: &TaskMap) -> Result<MotionController, CliError> {
        let c = &self.controller;
        let k = task.dim;
        let gains = match (c.omega, c.gp, c.gd) {
            (Some(w), None, None) => MotionGains::critically_damped(k, w),
            (None, Some(gp), Some(gd)) => MotionGains::isotropic(k, gp, gd),
            (None, None, _) | (None, _, None) => return Err(missing("controller.gp and controller.gd (or controller.omega)")),
            _ => return Err(CliError::Config("give either controller.omega or controller.gp/gd, not both".into())),
        }
        .map_err(config)?;
        let trajectory = c.trajectory.as_ref().ok_or_else(|| missing("controller.trajectory"))?;
        let mut ctrl = MotionController::new(task.clone(), DesiredMotion(trajectory.to_profile()), gains).map_err(config)?;
        if let Some(tol) = c.passive_tol {
            ctrl.passive_tol = tol;
        }
        if c.kind == ControllerKind::WeightedPidc {
            let metric = match (&c.weights, c.kappa) {
                (Some(w), None) => {
                    dims("controller.weights", sys.dof(), w.len())?;
                    MetricTensor::diagonal(w)
                }
                (None, Some(kappa)) => {
                    let lengths = c
                        .length_coordinates
                        .as_ref()
                        .ok_or_else(|| missing("controller.length_coordinates"))?;
                    dims("controller.length_coordinates", sys.dof(), lengths.len())?;
                    MetricTensor::characteristic_length(kappa, lengths)
                }
                (None, None) => return Err(missing("controller.weights or controller.kappa")),
                _ => return Err(CliError::Config("give either controller.weights or controller.kappa, not both".into())),
            }
            .map_err(config)?;
            ctrl = ctrl.with_weighting(Weighting::Metric(metric));
        }
        Ok(ctrl)
    }
}

impl ModelSpec {
    fn build(&self) -> Result<(MechanicalSystem, TaskMap), CliError> {
        let (mut sys, task) = match self.name {
            ModelName::ParticleOnCircle => (
                make_particle_on_circle(self.mass, self.radius, self.gravity).map_err(config)?,
                circle_task(self.radius),
            ),
            ModelName::SliderCrank => (
                make_slider_crank(self.mass, self.length, self.gravity).map_err(config)?,
                slider_crank_task(),
            ),
        };
        if let Some(tol) = self.rank_tol {
            if !(tol.is_finite() && tol >= 0.0) {
                return Err(CliError::Config(format!("model.rank_tol must be a non-negative number, got {tol}")));
            }
            sys = sys.with_rank_tolerance(RankTolerance::Absolute(tol));
        }
        if let Some(actuated) = &self.actuated {
            dims("model.actuated", sys.dof(), actuated.len())?;
            sys = sys.with_actuation(actuation_selector(actuated)).map_err(config)?;
        }
        Ok((sys, task))
    }
}

impl InitialSpec {
    fn build(&self, model: &ModelSpec, dof: usize) -> Result<GeneralizedState, CliError> {
        let (q, qdot) = match (&self.q, self.theta) {
            (Some(q), None) => {
                dims("initial.q", dof, q.len())?;
                let qdot = match &self.qdot {
                    Some(v) => {
                        dims("initial.qdot", dof, v.len())?;
                        DVector::from_column_slice(v)
                    }
                    None => DVector::zeros(dof),
                };
                (DVector::from_column_slice(q), qdot)
            }
            (None, Some(theta)) => {
                if self.qdot.is_some() {
                    return Err(CliError::Config("initial.qdot goes with initial.q; use initial.theta_rate".into()));
                }
                match model.name {
                    ModelName::ParticleOnCircle => polar_state(model.radius, theta, self.theta_rate),
                    ModelName::SliderCrank => branch_state(theta, self.theta_rate),
                }
            }
            (None, None) => return Err(missing("initial.q (or initial.theta)")),
            (Some(_), Some(_)) => return Err(CliError::Config("give either initial.q or initial.theta, not both".into())),
        };
        GeneralizedState::new(q, qdot, 0.0).map_err(config)
    }
}

impl SimSpec {
    fn build(&self) -> Result<SimConfig, CliError> {
        let mut cfg = SimConfig::new(self.dt, self.t_end).map_err(config)?;
        cfg = cfg.with_integrator(match self.integrator {
            IntegratorName::Rk4 => Integrator::Rk4,
            IntegratorName::SemiImplicitEuler => Integrator::SemiImplicitEuler,
        });
        if self.gamma.is_some() && self.variant != VariantName::Parameterized {
            return Err(CliError::Config("sim.gamma applies to variant = \"parameterized\" only".into()));
        }
        cfg = cfg.with_variant(match self.variant {
            VariantName::Skew => InertiaVariant::Skew,
            VariantName::Symmetric => InertiaVariant::Symmetric,
            VariantName::Parameterized => InertiaVariant::Parameterized { gamma: self.gamma },
        });
        let (tol, max_iter) = (self.nr_tol.unwrap_or(cfg.nr_tol), self.nr_max_iter.unwrap_or(cfg.nr_max_iter));
        cfg = cfg.with_nr(tol, max_iter);
        if let Some(every) = self.correction_every {
            cfg = cfg.with_correction_every(every);
        }
        cfg.validate().map_err(config)?;
        Ok(cfg)
    }
}

impl ForceSpec {
    fn build(&self, motion: Option<MotionController>, dof: usize) -> Result<HybridController, CliError> {
        let mut gains = ForceGains::isotropic(dof, self.gf, self.gi).map_err(config)?.with_law(match self.law {
            LawName::Standard => ForceLaw::Standard,
            LawName::Consistent => ForceLaw::Consistent,
        });
        if let Some(limit) = self.windup_limit {
            gains = gains.with_windup_limit(limit).map_err(config)?;
        }
        let profile = self.target.to_profile();
        let target = match self.space {
            TargetSpace::Multipliers => ForceTarget::Multipliers(profile),
            TargetSpace::Generalized => {
                dims("force.target", dof, profile.dim())?;
                ForceTarget::Generalized(profile)
            }
        };
        let mut ctrl = HybridController::new(motion, target, gains).map_err(config)?;
        ctrl.mode = match self.feedback {
            FeedbackName::Feedthrough => FeedbackMode::Feedthrough,
            FeedbackName::Delayed => FeedbackMode::Delayed,
        };
        Ok(ctrl)
    }
}

/// Everything a run needs, assembled from a scenario.
pub struct Setup {
    pub system: MechanicalSystem,
    pub task: TaskMap,
    pub initial: GeneralizedState,
    pub config: SimConfig,
    pub desired: Option<DesiredMotion>,
    pub policy: Disturbed<Policy>,
}

/// The force policies a scenario can select.
#[derive(Debug, Clone)]
pub enum Policy {
    Zero,
    Constant(ConstantForce),
    Motion(Box<MotionController>),
    Hybrid(Box<HybridController>),
}

impl ForcePolicy for Policy {
    fn force(&mut self, sys: &MechanicalSystem, state: &GeneralizedState) -> projdyn::Result<DVector<f64>> {
        match self {
            Policy::Zero => Ok(DVector::zeros(sys.dof())),
            Policy::Constant(p) => p.force(sys, state),
            Policy::Motion(p) => p.force(sys, state),
            Policy::Hybrid(p) => p.force(sys, state),
        }
    }

    fn end_step(
        &mut self,
        sys: &MechanicalSystem,
        state: &GeneralizedState,
        applied: &DVector<f64>,
        solution: &DynamicsSolution,
        dt: f64,
    ) -> projdyn::Result<()> {
        match self {
            Policy::Hybrid(p) => p.end_step(sys, state, applied, solution, dt),
            _ => Ok(()),
        }
    }
}

fn config(e: projdyn::Error) -> CliError {
    CliError::Config(e.to_string())
}

fn missing(field: &str) -> CliError {
    CliError::Config(format!("missing field {field}"))
}

fn dims(field: &str, expected: usize, found: usize) -> Result<(), CliError> {
    if expected == found {
        Ok(())
    } else {
        Err(CliError::Config(format!("{field} has {found} entries, the model needs {expected}")))
    }
}

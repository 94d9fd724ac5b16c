//! Constrained multibody dynamics and control built on null-space projection
//! operators.
//!
//! The constraint Jacobian `A(q)` enters only through the projector
//! `P = I - A⁺A`, obtained from a truncated SVD. Because no matrix built from
//! `A` is ever inverted, the dynamics, the constraint forces and the
//! controllers stay well defined when constraints become redundant or the
//! mechanism passes through a singular configuration.

pub mod control;
pub mod dynamics;
pub mod error;
pub mod model;
pub mod projection;
pub mod sim;

pub use dynamics::{
    forward_dynamics, forward_dynamics_classical, DynamicsContext, DynamicsSolution, InertiaVariant,
};
pub use error::{Error, Result};
pub use model::{GeneralizedState, MechanicalSystem, SystemBuilder, TaskMap};
pub use projection::{pseudo_inverse, MetricTensor, ProjectionData, RankTolerance};
pub use sim::{simulate, ForcePolicy, Integrator, SimConfig, TrajectoryLog};

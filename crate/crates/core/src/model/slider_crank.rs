//! Slider-crank with equal crank and rod lengths, modelled as a planar
//! two-link open chain (point masses at the link tips) whose tip is held on
//! the horizontal line `y = 0`.
//!
//! On the assembly branch `q₂ = 2π - 2q₁` the constraint Jacobian reduces to
//! `A = l·c₁·[2, 1]`, which vanishes at `q₁ = ±π/2`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{dmatrix, DMatrix, DVector};

use super::{MechanicalSystem, TaskMap};
use crate::error::{Error, Result};

pub const DEFAULT_GRAVITY: f64 = 9.81;

pub fn make_slider_crank(mass: f64, length: f64, gravity: f64) -> Result<MechanicalSystem> {
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::InvalidParameter(format!("slider-crank mass {mass}")));
    }
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::InvalidParameter(format!("slider-crank length {length}")));
    }
    if !gravity.is_finite() {
        return Err(Error::InvalidParameter(format!("slider-crank gravity {gravity}")));
    }
    let (m, l, g) = (mass, length, gravity);
    let ml2 = m * l * l;

    MechanicalSystem::builder("slider_crank", 2, 1)
        .mass_matrix(move |q| {
            let c2 = q[1].cos();
            Ok(dmatrix![3.0 + 2.0 * c2, 1.0 + c2; 1.0 + c2, 1.0] * ml2)
        })
        .bias(move |q, qd| {
            let (s2, c1, c12) = (q[1].sin(), q[0].cos(), (q[0] + q[1]).cos());
            Ok(DVector::from_vec(vec![
                -ml2 * s2 * (qd[1] * qd[1] + 2.0 * qd[0] * qd[1]) + m * l * g * (c12 + 2.0 * c1),
                ml2 * s2 * qd[0] * qd[0] + m * l * g * c12,
            ]))
        })
        .constraint(move |q| Ok(DVector::from_vec(vec![l * (q[0].sin() + (q[0] + q[1]).sin())])))
        .jacobian(move |q| {
            let (c1, c12) = (q[0].cos(), (q[0] + q[1]).cos());
            Ok(dmatrix![l * (c1 + c12), l * c12])
        })
        .jacobian_rate(move |q, qd| {
            let (s1, s12) = (q[0].sin(), (q[0] + q[1]).sin());
            let w12 = qd[0] + qd[1];
            Ok(dmatrix![-l * (s1 * qd[0] + s12 * w12), -l * s12 * w12])
        })
        .potential(move |q| Ok(m * g * l * (2.0 * q[0].sin() + (q[0] + q[1]).sin())))
        .build()
}

/// Point on the `q₂ = 2π - 2q₁` branch with crank rate `theta_dot`.
pub fn branch_state(theta: f64, theta_dot: f64) -> (DVector<f64>, DVector<f64>) {
    (
        DVector::from_vec(vec![theta, 2.0 * PI - 2.0 * theta]),
        DVector::from_vec(vec![theta_dot, -2.0 * theta_dot]),
    )
}

/// Crank-angle task map `θ = q₁` on the `q₂ = 2π - 2q₁` branch.
pub fn slider_crank_task() -> TaskMap {
    TaskMap {
        dim: 1,
        embed: Arc::new(|th| DVector::from_vec(vec![th[0], 2.0 * PI - 2.0 * th[0]])),
        jacobian: Arc::new(|_| dmatrix![1.0; -2.0]),
        jacobian_rate: Arc::new(|_, _| DMatrix::zeros(2, 1)),
        chart: Arc::new(|q, qd| {
            (
                DVector::from_element(1, q[0]),
                DVector::from_element(1, qd[0]),
            )
        }),
    }
}

/// Projector on the assembly branch in closed form: the constraint drops out
/// (`P = I`) while `|c₁| < ε/(l√5)`, i.e. while the single singular value
/// `√5·l·|c₁|` is below the rank cutoff `ε`.
pub fn closed_form_projector(q1: f64, length: f64, eps: f64) -> DMatrix<f64> {
    if q1.cos().abs() < eps / (length * 5f64.sqrt()) {
        DMatrix::identity(2, 2)
    } else {
        dmatrix![0.2, -0.4; -0.4, 0.8]
    }
}

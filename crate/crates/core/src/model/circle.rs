//! Point mass on a circle of radius `ρ`, `Φ(q) = ‖q‖ - ρ`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, RowDVector};

use super::{MechanicalSystem, TaskMap};
use crate::error::{Error, Result};

fn radius_of(q: &DVector<f64>) -> Result<f64> {
    let r = q.norm();
    if r > 0.0 {
        Ok(r)
    } else {
        Err(Error::Model("circle constraint Jacobian is undefined at the origin".into()))
    }
}

/// Gravity acts along `-q₂`; pass `gravity = 0` for the force-free model.
pub fn make_particle_on_circle(mass: f64, radius: f64, gravity: f64) -> Result<MechanicalSystem> {
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::InvalidParameter(format!("particle mass {mass}")));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidParameter(format!("circle radius {radius}")));
    }
    if !gravity.is_finite() {
        return Err(Error::InvalidParameter(format!("gravity {gravity}")));
    }
    let (m, rho, g) = (mass, radius, gravity);
    MechanicalSystem::builder("particle_on_circle", 2, 1)
        .mass_matrix(move |_| Ok(DMatrix::identity(2, 2) * m))
        .bias(move |_, _| Ok(DVector::from_vec(vec![0.0, m * g])))
        .constraint(move |q| Ok(DVector::from_element(1, radius_of(q)? - rho)))
        .jacobian(|q| {
            let r = radius_of(q)?;
            Ok(DMatrix::from_row_slice(1, 2, &[q[0] / r, q[1] / r]))
        })
        .jacobian_rate(|q, qd| {
            let r = radius_of(q)?;
            let radial_rate = q.dot(qd) / (r * r * r);
            let row = RowDVector::from_row_slice(&[
                qd[0] / r - q[0] * radial_rate,
                qd[1] / r - q[1] * radial_rate,
            ]);
            Ok(DMatrix::from_rows(&[row]))
        })
        .potential(move |q| Ok(m * g * q[1]))
        .build()
}

/// Polar-angle task map, `q = ρ[cos θ, sin θ]`.
pub fn circle_task(radius: f64) -> TaskMap {
    let rho = radius;
    TaskMap {
        dim: 1,
        embed: Arc::new(move |th| DVector::from_vec(vec![rho * th[0].cos(), rho * th[0].sin()])),
        jacobian: Arc::new(move |th| DMatrix::from_column_slice(2, 1, &[-rho * th[0].sin(), rho * th[0].cos()])),
        jacobian_rate: Arc::new(move |th, thd| {
            DMatrix::from_column_slice(2, 1, &[-rho * thd[0] * th[0].cos(), -rho * thd[0] * th[0].sin()])
        }),
        chart: Arc::new(|q, qd| {
            let r2 = q.norm_squared();
            (
                DVector::from_element(1, q[1].atan2(q[0])),
                DVector::from_element(1, (q[0] * qd[1] - q[1] * qd[0]) / r2),
            )
        }),
    }
}

/// State on the circle at angle `theta` with angular rate `theta_dot`.
pub fn polar_state(radius: f64, theta: f64, theta_dot: f64) -> (DVector<f64>, DVector<f64>) {
    let (s, c) = theta.sin_cos();
    (
        DVector::from_vec(vec![radius * c, radius * s]),
        DVector::from_vec(vec![-radius * theta_dot * s, radius * theta_dot * c]),
    )
}

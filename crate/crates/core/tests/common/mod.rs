#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{dmatrix, DMatrix, DVector};
use projdyn::{GeneralizedState, MechanicalSystem, TaskMap};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

pub fn uniform_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
}

/// Random `rows × cols` matrix of rank at most `rank`, scaled by `scale`.
pub fn low_rank_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, rank: usize, scale: f64) -> DMatrix<f64> {
    uniform_matrix(rng, rows, rank) * uniform_matrix(rng, rank, cols) * scale
}

/// Random Jacobian in one of several families: full rank, rank deficient,
/// zero, duplicated rows, badly scaled.
pub fn random_jacobian(rng: &mut ChaCha8Rng, max_dim: usize) -> DMatrix<f64> {
    let n = rng.gen_range(1..=max_dim);
    let m = rng.gen_range(0..=max_dim);
    let scale = 10f64.powf(rng.gen_range(-3.0..3.0));
    match rng.gen_range(0..5) {
        0 => DMatrix::zeros(m, n),
        1 if m > 0 && n > 1 => {
            let r = rng.gen_range(1..m.min(n).max(2));
            low_rank_matrix(rng, m, n, r, scale)
        }
        2 if m > 1 => {
            let mut a = uniform_matrix(rng, m, n) * scale;
            let row = a.row(0).clone_owned();
            a.set_row(m - 1, &row);
            a
        }
        _ => uniform_matrix(rng, m, n) * scale,
    }
}

pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let l = uniform_matrix(rng, n, n);
    let scale = 10f64.powf(rng.gen_range(-2.0..2.0));
    (&l * l.transpose() + DMatrix::identity(n, n) * 0.1) * scale
}

/// Orthogonal projector onto the null space of a random Jacobian.
pub fn random_projector(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let m = rng.gen_range(0..=n);
    let a = if m > 1 && rng.gen_bool(0.3) {
        low_rank_matrix(rng, m, n, m - 1, 1.0)
    } else {
        uniform_matrix(rng, m, n)
    };
    projdyn::pseudo_inverse(&a, projdyn::RankTolerance::Auto).unwrap().projector
}

pub fn random_selector(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| if rng.gen_bool(0.6) { 1.0 } else { 0.0 }))
}

/// Yoke mechanism mixing units: a slider at `x` driven by a crank of length
/// `L` at angle `φ` through `x = L sin φ`. The crank carries a point mass at
/// radius `r` under gravity. All lengths are given in one unit system; scaling
/// every length (and `g`) by `s` describes the same machine in another.
pub struct Yoke {
    pub slider_mass: f64,
    pub crank_mass: f64,
    pub length: f64,
    pub radius: f64,
    pub gravity: f64,
}

impl Yoke {
    pub fn reference() -> Self {
        Self {
            slider_mass: 2.0,
            crank_mass: 0.5,
            length: 0.3,
            radius: 0.2,
            gravity: 9.81,
        }
    }

    pub fn rescaled(&self, s: f64) -> Self {
        Self {
            slider_mass: self.slider_mass,
            crank_mass: self.crank_mass,
            length: self.length * s,
            radius: self.radius * s,
            gravity: self.gravity * s,
        }
    }

    pub fn system(&self) -> MechanicalSystem {
        let (m1, mc, l, r, g) = (self.slider_mass, self.crank_mass, self.length, self.radius, self.gravity);
        let inertia = mc * r * r;
        MechanicalSystem::builder("yoke", 2, 1)
            .mass_matrix(move |_| Ok(dmatrix![m1, 0.0; 0.0, inertia]))
            .bias(move |q, _| Ok(DVector::from_vec(vec![0.0, mc * g * r * q[1].cos()])))
            .constraint(move |q| Ok(DVector::from_element(1, q[0] - l * q[1].sin())))
            .jacobian(move |q| Ok(dmatrix![1.0, -l * q[1].cos()]))
            .jacobian_rate(move |q, qd| Ok(dmatrix![0.0, l * q[1].sin() * qd[1]]))
            .potential(move |q| Ok(mc * g * r * q[1].sin()))
            .build()
            .unwrap()
    }

    pub fn task(&self) -> TaskMap {
        let l = self.length;
        TaskMap {
            dim: 1,
            embed: Arc::new(move |th| DVector::from_vec(vec![l * th[0].sin(), th[0]])),
            jacobian: Arc::new(move |th| dmatrix![l * th[0].cos(); 1.0]),
            jacobian_rate: Arc::new(move |th, thd| dmatrix![-l * th[0].sin() * thd[0]; 0.0]),
            chart: Arc::new(|q, qd| (DVector::from_element(1, q[1]), DVector::from_element(1, qd[1]))),
        }
    }

    pub fn state(&self, phi: f64, rate: f64) -> GeneralizedState {
        let l = self.length;
        GeneralizedState::from_slices(&[l * phi.sin(), phi], &[l * phi.cos() * rate, rate]).unwrap()
    }
}

/// Particle on a circle with the constraint stated twice, so that `A` is
/// 2×2 of rank one and the multipliers are not unique.
pub fn redundant_circle(mass: f64, radius: f64, gravity: f64) -> MechanicalSystem {
    let base = projdyn::model::make_particle_on_circle(mass, radius, gravity).unwrap();
    let (b1, b2, b3) = (base.clone(), base.clone(), base.clone());
    MechanicalSystem::builder("redundant-circle", 2, 2)
        .mass_matrix(move |q| b1.mass_matrix(q))
        .bias(move |q, qd| b2.bias(q, qd))
        .constraint(move |q| {
            let r = q.norm() - radius;
            Ok(DVector::from_vec(vec![r, 2.0 * r]))
        })
        .jacobian(move |q| {
            let a = b3.jacobian(q)?;
            Ok(DMatrix::from_rows(&[a.row(0).clone_owned(), a.row(0) * 2.0]))
        })
        .jacobian_rate(move |q, qd| {
            let adot = base.jacobian_rate(q, qd)?;
            Ok(DMatrix::from_rows(&[adot.row(0).clone_owned(), adot.row(0) * 2.0]))
        })
        .potential(move |q| Ok(mass * gravity * q[1]))
        .build()
        .unwrap()
}

/// Random on-manifold slider-crank state on either assembly branch, keeping
/// `|cos q₁| ≥ margin`.
pub fn random_slider_state(rng: &mut ChaCha8Rng, margin: f64) -> GeneralizedState {
    loop {
        let q1 = rng.gen_range(0.0..2.0 * PI);
        if q1.cos().abs() < margin {
            continue;
        }
        let rate = rng.gen_range(-3.0..3.0);
        return if rng.gen_bool(0.7) {
            let (q, qd) = projdyn::model::slider_crank::branch_state(q1, rate);
            GeneralizedState::new(q, qd, 0.0).unwrap()
        } else {
            // folded branch q₂ = π, where only the crank moves
            GeneralizedState::from_slices(&[q1, PI], &[rate, 0.0]).unwrap()
        };
    }
}

pub fn random_circle_state(rng: &mut ChaCha8Rng, radius: f64) -> GeneralizedState {
    let th = rng.gen_range(-PI..PI);
    let rate = rng.gen_range(-3.0..3.0);
    let (q, qd) = projdyn::model::circle::polar_state(radius, th, rate);
    GeneralizedState::new(q, qd, 0.0).unwrap()
}

pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).norm() / scale
    }
}

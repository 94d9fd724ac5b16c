//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

mod common;

use std::f64::consts::PI;
use std::time::Instant;

use common::*;
use nalgebra::{dmatrix, DMatrix, DVector};
use projdyn::control::{
    controllability_check, passive_joint_control, passive_joint_map, pidc, weighted_pidc, DesiredMotion,
    ForceGains, ForceLaw, ForceTarget, HybridController, MotionController, MotionGains, Profile,
};
use projdyn::dynamics::{
    constraint_inertia_parameterized, constraint_inertia_skew, constraint_inertia_symmetric,
    forward_dynamics, forward_dynamics_classical, is_decoupled, DynamicsContext, InertiaVariant,
};
use projdyn::model::circle::{circle_task, make_particle_on_circle, polar_state};
use projdyn::model::slider_crank::{branch_state, closed_form_projector, make_slider_crank, slider_crank_task};
use projdyn::model::actuation_selector;
use projdyn::projection::{numerical_rank, singular_values, spectral_norm};
use projdyn::sim::{nr_project, simulate, Disturbed, SimConfig, ZeroForce};
use projdyn::{Error, GeneralizedState, MetricTensor, RankTolerance};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn all_variants() -> [InertiaVariant; 3] {
    [
        InertiaVariant::Skew,
        InertiaVariant::Symmetric,
        InertiaVariant::Parameterized { gamma: None },
    ]
}

fn projector_algebra() -> Outcome {
    let mut rng = rng(1);
    let tol = 1e-10;
    let (mut deficient, mut zero) = (0, 0);
    for k in 0..500 {
        let a = random_jacobian(&mut rng, 12);
        let n = a.ncols();
        let pd = projdyn::pseudo_inverse(&a, RankTolerance::Auto).map_err(|e| e.to_string())?;
        let p = &pd.projector;
        let sigma1 = singular_values(&a).first().copied().unwrap_or(0.0);
        check((p * p - p).amax() <= tol, || format!("case {k}: P² ≠ P"))?;
        check((p - p.transpose()).amax() <= tol, || format!("case {k}: Pᵀ ≠ P"))?;
        check(spectral_norm(&(&a * p)) <= tol * (1.0 + sigma1), || format!("case {k}: ‖AP‖ too large"))?;
        let rank_a = numerical_rank(&a, RankTolerance::Auto);
        let rank_p = singular_values(p).iter().filter(|&&s| s > 0.5).count();
        check(rank_p == n - rank_a, || format!("case {k}: rank(P) = {rank_p}, n - rank(A) = {}", n - rank_a))?;
        if a.iter().all(|&x| x == 0.0) {
            zero += 1;
        } else if rank_a < a.nrows().min(n) {
            deficient += 1;
        }
    }
    check(deficient > 20 && zero > 20, || format!("weak sample: {deficient} deficient, {zero} zero"))?;
    Ok(format!("500 Jacobians ({deficient} rank-deficient, {zero} zero)"))
}

fn inertia_preservation() -> Outcome {
    let mut rng = rng(2);
    let mut worst = 0.0f64;
    let mut min_eig = f64::INFINITY;
    for k in 0..500 {
        let n = rng.gen_range(1..=12);
        let m = random_spd(&mut rng, n);
        let p = random_projector(&mut rng, n);
        let mc = constraint_inertia_skew(&m, &p);
        for _ in 0..4 {
            let z = uniform_vector(&mut rng, n);
            let (lhs, rhs) = (z.dot(&(&mc * &z)), z.dot(&(&m * &z)));
            let rel = (lhs - rhs).abs() / rhs.abs();
            worst = worst.max(rel);
            check(rel <= 1e-10, || format!("case {k}: zᵀM_c z = {lhs}, zᵀMz = {rhs}"))?;
        }
        let sym = constraint_inertia_symmetric(&m, &p);
        let eig = sym.symmetric_eigenvalues().min() / spectral_norm(&m);
        min_eig = min_eig.min(eig);
        check(eig > 0.0, || format!("case {k}: M'_c has eigenvalue {eig}"))?;
    }
    Ok(format!("max |zᵀM_c z - zᵀMz|/zᵀMz = {worst:.1e}, min λ(M'_c)/‖M‖ = {min_eig:.1e}"))
}

fn oracle_equivalence() -> Outcome {
    let mut rng = rng(3);
    let tol = 1e-8;
    let (mut worst_acc, mut worst_force, mut worst_variant) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..200 {
        let (sys, state) = if k % 2 == 0 {
            let rho = rng.gen_range(0.2..3.0);
            let sys = make_particle_on_circle(rng.gen_range(0.1..5.0), rho, rng.gen_range(0.0..20.0)).unwrap();
            (sys, random_circle_state(&mut rng, rho))
        } else {
            let sys = make_slider_crank(rng.gen_range(0.1..5.0), rng.gen_range(0.2..2.0), rng.gen_range(0.0..20.0))
                .unwrap();
            (sys, random_slider_state(&mut rng, 0.05))
        };
        let f = uniform_vector(&mut rng, 2) * 10.0;
        let classical = forward_dynamics_classical(&sys, &state, &f).map_err(|e| format!("case {k}: {e}"))?;
        let a = sys.jacobian(&state.q).unwrap();
        let classical_force = a.transpose() * &classical.multipliers;
        let mut accelerations = Vec::new();
        for variant in all_variants() {
            let sol = forward_dynamics(&sys, &state, &f, variant).map_err(|e| format!("case {k}: {e}"))?;
            let e_acc = rel_err(&sol.qddot, &classical.qddot);
            let e_force = rel_err(&sol.constraint_force, &classical_force);
            worst_acc = worst_acc.max(e_acc);
            worst_force = worst_force.max(e_force);
            check(e_acc <= tol, || format!("case {k} {variant:?}: q̈ rel err {e_acc:e}"))?;
            check(e_force <= tol, || format!("case {k} {variant:?}: Aᵀλ rel err {e_force:e}"))?;
            accelerations.push(sol.qddot);
        }
        for i in 0..3 {
            for j in i + 1..3 {
                let e = rel_err(&accelerations[i], &accelerations[j]);
                worst_variant = worst_variant.max(e);
                check(e <= tol, || format!("case {k}: variants {i},{j} differ by {e:e}"))?;
            }
        }
    }
    Ok(format!(
        "200 states: q̈ {worst_acc:.1e}, Aᵀλ {worst_force:.1e}, variants {worst_variant:.1e} (rel)"
    ))
}

fn singularity_robustness() -> Outcome {
    let (l, eps) = (1.0, 1e-2);
    let sys = make_slider_crank(1.0, l, 9.81).unwrap().with_rank_tolerance(RankTolerance::Absolute(eps));
    let (q, qd) = branch_state(PI / 2.0 - 0.15, 1.0);
    let s0 = GeneralizedState::new(q, qd, 0.0).unwrap();
    let cfg = SimConfig::new(1e-3, 0.3).unwrap();
    let log = simulate(&sys, &s0, &mut ZeroForce, &cfg).map_err(|e| e.to_string())?;
    let crossed = log.rows.first().unwrap().q[0] < PI / 2.0 && log.rows.last().unwrap().q[0] > PI / 2.0;
    check(crossed, || "trajectory did not cross q₁ = π/2".into())?;
    let (mut projection_failures, mut classical_failures) = (0, 0);
    for row in &log.rows {
        let state = GeneralizedState::new(row.q.clone(), row.qdot.clone(), row.t).unwrap();
        if forward_dynamics(&sys, &state, &row.force, InertiaVariant::Skew).is_err() {
            projection_failures += 1;
        }
        if let Err(Error::RankDeficient { .. }) = forward_dynamics_classical(&sys, &state, &row.force) {
            classical_failures += 1;
        }
    }
    check(projection_failures == 0, || format!("{projection_failures} projection failures"))?;
    check(classical_failures >= 1, || "classical method never failed".into())?;

    let mut checked = (0, 0);
    for k in 0..=20_000 {
        let q1 = 2.0 * PI * k as f64 / 20_000.0;
        let sigma = 5f64.sqrt() * l * q1.cos().abs();
        if (sigma - eps).abs() < 1e-9 {
            continue;
        }
        let (q, _) = branch_state(q1, 0.0);
        let p = projdyn::pseudo_inverse(&sys.jacobian(&q).unwrap(), sys.rank_tolerance()).unwrap().projector;
        let expected = closed_form_projector(q1, l, eps);
        check((&p - &expected).amax() <= 1e-12, || format!("q₁ = {q1}: P = {p} expected {expected}"))?;
        if sigma < eps {
            checked.1 += 1;
        } else {
            checked.0 += 1;
        }
    }
    Ok(format!(
        "{} steps through π/2: 0 projection failures, {classical_failures} classical rank errors; closed-form P at {} + {} (band) angles",
        log.len(),
        checked.0,
        checked.1
    ))
}

fn parameterized_inertia() -> Outcome {
    let mut rng = rng(5);
    for k in 0..50 {
        let (m, l) = (rng.gen_range(0.1..10.0), rng.gen_range(0.1..3.0));
        let sys = make_slider_crank(m, l, 9.81).unwrap();
        let q1 = loop {
            let q1 = rng.gen_range(0.0..2.0 * PI);
            if q1.cos().abs() > 0.05 {
                break q1;
            }
        };
        let (q, _) = branch_state(q1, 0.0);
        let c2 = q[1].cos();
        let ml2 = m * l * l;
        let mass = sys.mass_matrix(&q).unwrap();
        let p = projdyn::pseudo_inverse(&sys.jacobian(&q).unwrap(), RankTolerance::Auto).unwrap().projector;
        let mcc = constraint_inertia_parameterized(&mass, &p, ml2).unwrap();
        let expected = dmatrix![1.0, (1.0 + c2) / 5.0; 0.0, (3.0 - 2.0 * c2) / 5.0] * ml2;
        check((&mcc - &expected).amax() <= 1e-12 * ml2, || format!("case {k}: M''_c = {mcc} expected {expected}"))?;
        let det = mcc.determinant();
        let det_expected = m * m * l.powi(4) * (3.0 - 2.0 * c2) / 5.0;
        check((det - det_expected).abs() <= 1e-12 * det_expected.abs(), || {
            format!("case {k}: det {det} expected {det_expected}")
        })?;
    }
    Ok("50 configurations match ml²[[1,(1+c₂)/5],[0,(3-2c₂)/5]] and its determinant".into())
}

fn simulation_fidelity() -> Outcome {
    let cfg = SimConfig::new(1e-3, 10.0).unwrap();
    let mut summary = Vec::new();
    let circle = make_particle_on_circle(1.0, 1.0, 0.0).unwrap();
    let (q, qd) = polar_state(1.0, 0.3, 2.0);
    let slider = make_slider_crank(1.0, 1.0, 0.0).unwrap();
    let (sq, sqd) = branch_state(0.2, 0.15);
    let runs = [
        ("circle", &circle, GeneralizedState::new(q, qd, 0.0).unwrap()),
        ("slider-crank", &slider, GeneralizedState::new(sq, sqd, 0.0).unwrap()),
    ];
    for (name, sys, s0) in runs {
        let log = simulate(sys, &s0, &mut ZeroForce, &cfg).map_err(|e| e.to_string())?;
        let (phi, drift) = (log.max_constraint_norm(), log.relative_energy_drift());
        check(phi <= 1e-8, || format!("{name}: max ‖Φ‖ = {phi:e}"))?;
        check(drift <= 1e-6, || format!("{name}: energy drift {drift:e}"))?;
        summary.push(format!("{name} ‖Φ‖ {phi:.1e} drift {drift:.1e}"));
    }

    // quadratic convergence of the coordinate correction
    let mut rng = rng(6);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for _ in 0..20 {
        let (q, _) = branch_state(rng.gen_range(0.2..1.3), 0.0);
        let dq = uniform_vector(&mut rng, 2).normalize() * 1e-2;
        let out = nr_project(&slider, &(q + dq), 1e-15, 10).map_err(|e| e.to_string())?;
        for w in out.residuals.windows(2) {
            if w[1] > 1e-13 {
                xs.push(w[0].ln());
                ys.push(w[1].ln());
            }
        }
    }
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    check(slope >= 1.8, || format!("NR convergence exponent {slope:.2}"))?;
    summary.push(format!("NR exponent {slope:.2}"));
    Ok(summary.join("; "))
}

fn pidc_regulation() -> Outcome {
    let sys = make_slider_crank(1.0, 1.0, 9.81).unwrap();
    let (q, qd) = branch_state(PI / 3.0, 0.0);
    let s0 = GeneralizedState::new(q, qd, 0.0).unwrap();
    let gains = MotionGains::isotropic(1, 25.0, 10.0).unwrap();
    let desired = DesiredMotion::regulate(DVector::from_element(1, PI / 4.0));
    let task = slider_crank_task();
    let mut ctrl = MotionController::new(task.clone(), desired.clone(), gains.clone()).unwrap();
    let cfg = SimConfig::new(1e-3, 2.0).unwrap();
    let log = simulate(&sys, &s0, &mut ctrl, &cfg).map_err(|e| e.to_string())?;
    let e0 = PI / 4.0 - PI / 3.0;
    let mut worst = 0.0f64;
    let mut rng = rng(7);
    let mut perturbed = 0;
    for (k, row) in log.rows.iter().enumerate() {
        let envelope = e0 * (1.0 + 5.0 * row.t) * (-5.0 * row.t).exp();
        let e = PI / 4.0 - row.q[0];
        let rel = (e - envelope).abs() / envelope.abs();
        worst = worst.max(rel);
        check(rel <= 0.05, || format!("t = {}: e = {e:e}, envelope {envelope:e}", row.t))?;
        if k % 20 == 0 {
            let state = GeneralizedState::new(row.q.clone(), row.qdot.clone(), row.t).unwrap();
            let f = pidc(&sys, &state, &task, &desired, &gains, row.t).map_err(|e| e.to_string())?;
            let a = sys.jacobian(&state.q).unwrap();
            let p = projdyn::pseudo_inverse(&a, RankTolerance::Auto).unwrap().projector;
            check((&p * &f - &f).amax() <= 1e-10 * (1.0 + f.amax()), || format!("t = {}: Pf ≠ f", row.t))?;
            if perturbed < 100 {
                let w = DVector::from_element(1, rng.gen_range(-1.0..1.0) * 10f64.powf(rng.gen_range(-4.0..1.0)));
                let other = &f + a.transpose() * w;
                check(other.norm() > f.norm(), || format!("t = {}: perturbed command not larger", row.t))?;
                perturbed += 1;
            }
        }
    }
    check(perturbed == 100, || format!("only {perturbed} perturbations"))?;
    Ok(format!("max |e - e₀(1+5t)e^(-5t)|/envelope = {worst:.1e} over 2 s; Pf = f; 100 perturbations larger"))
}

fn force_control() -> Outcome {
    let (m, rho, g) = (2.0, 0.8, 9.81);
    let sys = make_particle_on_circle(m, rho, g).unwrap();
    let theta0 = 0.4;
    let (q, qd) = polar_state(rho, theta0, 0.0);
    let s0 = GeneralizedState::new(q.clone(), qd, 0.0).unwrap();

    let ctx = DynamicsContext::new(&sys, &s0).unwrap();
    check(is_decoupled(&ctx.mass, ctx.projector(), 1e-12), || "circle not reported decoupled".into())?;
    let mu_p = (ctx.coupling().unwrap() * ctx.projector()).amax();
    check(mu_p <= 1e-10, || format!("‖μP‖ = {mu_p:e}"))?;

    let (gf, gi) = (1.5, 12.5);
    let tau = (1.0 + gf) / gi;
    let t_step = 0.5;
    let motion = MotionController::new(
        circle_task(rho),
        DesiredMotion::regulate(DVector::from_element(1, theta0)),
        MotionGains::isotropic(1, 25.0, 10.0).unwrap(),
    )
    .unwrap();
    let target = ForceTarget::Multipliers(Profile::Step {
        before: DVector::from_element(1, 3.0),
        after: DVector::from_element(1, -5.0),
        at: t_step,
    });
    let gains = ForceGains::isotropic(2, gf, gi).unwrap().with_law(ForceLaw::Consistent);
    let ctrl = HybridController::new(Some(motion), target, gains).unwrap();
    // constant normal load the controller does not model
    let normal = &q / rho;
    let mut policy = Disturbed { inner: ctrl, load: &normal * 1.7 };
    let cfg = SimConfig::new(1e-3, t_step + 2.0 * tau + 0.05).unwrap();
    simulate(&sys, &s0, &mut policy, &cfg).map_err(|e| e.to_string())?;

    let history = &policy.inner.error_history;
    let start = history.iter().position(|(t, _)| *t >= t_step - 1e-12).ok_or("no post-step samples")?;
    let (t0, e0) = &history[start];
    check(e0.norm() > 0.1, || format!("no force error after the step: {e0}"))?;
    let mut worst = 0.0f64;
    let mut samples = 0;
    for (t, e) in &history[start..] {
        if t - t0 > 2.0 * tau + 1e-12 {
            break;
        }
        let ode = e0 * (-(t - t0) / tau).exp();
        let rel = (e - &ode).norm() / ode.norm();
        worst = worst.max(rel);
        samples += 1;
        check(rel <= 0.02, || format!("t = {t}: e = {e:?}, ode {ode:?}"))?;
    }
    Ok(format!(
        "{samples} samples over 2τ = {:.2} s: max rel deviation from (1+G_F)ė + G_I e = 0 is {worst:.1e}; decoupled, ‖μP‖ = {mu_p:.0e}",
        2.0 * tau
    ))
}

fn passive_joints() -> Outcome {
    let full = make_slider_crank(1.0, 1.0, 9.81).unwrap();
    let passive = full.clone().with_actuation(actuation_selector(&[true, false])).unwrap();
    let (q, qd) = branch_state(PI / 3.0, 0.0);
    let s0 = GeneralizedState::new(q, qd, 0.0).unwrap();
    let make = || {
        MotionController::new(
            slider_crank_task(),
            DesiredMotion::regulate(DVector::from_element(1, PI / 4.0)),
            MotionGains::isotropic(1, 25.0, 10.0).unwrap(),
        )
        .unwrap()
    };
    let cfg = SimConfig::new(1e-3, 2.0).unwrap();
    let log_full = simulate(&full, &s0, &mut make(), &cfg).map_err(|e| e.to_string())?;
    let log_passive = simulate(&passive, &s0, &mut make(), &cfg).map_err(|e| e.to_string())?;
    let mut worst_row = 0.0f64;
    let mut worst_track = 0.0f64;
    for (a, b) in log_full.rows.iter().zip(&log_passive.rows) {
        let ratio = b.force[1].abs() / b.force.norm();
        worst_row = worst_row.max(ratio);
        check(b.force[1].abs() <= 1e-10 * b.force.norm(), || format!("t = {}: passive row {}", b.t, b.force[1]))?;
        worst_track = worst_track.max((&a.q - &b.q).amax());
    }
    check(worst_track <= 1e-6, || format!("tracking deviates by {worst_track:e}"))?;

    let mut rng = rng(9);
    let (mut feasible, mut infeasible) = (0, 0);
    for k in 0..500 {
        let n = rng.gen_range(1..=6);
        let p = random_projector(&mut rng, n);
        let b = random_selector(&mut rng, n);
        let map = passive_joint_map(&p, &b, 1e-8).unwrap();
        let check_ok = controllability_check(&p, &b, 1e-8).unwrap();
        check(map.feasible == check_ok, || format!("pair {k}: map {} vs check {check_ok}\nP = {p}B = {b}", map.feasible))?;
        if map.feasible {
            feasible += 1;
        } else {
            infeasible += 1;
        }
    }
    check(feasible > 50 && infeasible > 50, || format!("weak sample: {feasible}/{infeasible}"))?;

    for n in 1..=6 {
        for passive_joint in 0..n {
            let mut actuated = vec![true; n];
            actuated[passive_joint] = false;
            let b = actuation_selector(&actuated);
            let p = DMatrix::identity(n, n);
            let map = passive_joint_map(&p, &b, 1e-8).unwrap();
            check(!map.feasible && !controllability_check(&p, &b, 1e-8).unwrap(), || {
                format!("P = I, n = {n}: reported controllable")
            })?;
            check(
                passive_joint_control(&DVector::zeros(n), &map) == Err(Error::Uncontrollable),
                || "P = I did not raise Uncontrollable".into(),
            )?;
        }
    }
    Ok(format!(
        "passive row/‖f‖ ≤ {worst_row:.0e}, tracking Δ {worst_track:.0e}; 500 pairs agree ({feasible} feasible, {infeasible} not); P = I uncontrollable"
    ))
}

fn weighted_metric() -> Outcome {
    let base = Yoke::reference();
    let kappa = 0.25;
    let gains = MotionGains::isotropic(1, 25.0, 10.0).unwrap();
    let desired = DesiredMotion(Profile::Sinusoid {
        offset: DVector::from_element(1, 0.3),
        amplitude: DVector::from_element(1, 0.4),
        omega: 2.0,
        phase: 0.1,
    });
    let mut rng = rng(10);
    let mut worst = 0.0f64;
    let mut worst_identity = 0.0f64;
    for _ in 0..50 {
        let phi = rng.gen_range(-1.2..1.2);
        let rate = rng.gen_range(-2.0..2.0);
        let t = rng.gen_range(0.0..3.0);
        let reference = {
            let w = MetricTensor::characteristic_length(kappa, &[true, false]).unwrap();
            let mut state = base.state(phi, rate);
            state.t = t;
            weighted_pidc(&base.system(), &state, &base.task(), &desired, &gains, &w, t).map_err(|e| e.to_string())?
        };
        for s in [1e-3, 0.01, 100.0, 1000.0] {
            let scaled = base.rescaled(s);
            let w = MetricTensor::characteristic_length(kappa * s, &[true, false]).unwrap();
            let mut state = scaled.state(phi, rate);
            state.t = t;
            let f = weighted_pidc(&scaled.system(), &state, &scaled.task(), &desired, &gains, &w, t)
                .map_err(|e| e.to_string())?;
            let mapped_back = DVector::from_vec(vec![f[0] / s, f[1] / (s * s)]);
            let e = rel_err(&mapped_back, &reference);
            worst = worst.max(e);
            check(e <= 1e-9, || format!("scale {s}: rel deviation {e:e}"))?;
        }
        for (sys, task, state) in [
            (base.system(), base.task(), base.state(phi, rate)),
            (make_slider_crank(1.0, 1.0, 9.81).unwrap(), slider_crank_task(), {
                let (q, qd) = branch_state(phi + 0.1, rate);
                GeneralizedState::new(q, qd, t).unwrap()
            }),
        ] {
            let a = pidc(&sys, &state, &task, &desired, &gains, t).map_err(|e| e.to_string())?;
            let b = weighted_pidc(&sys, &state, &task, &desired, &gains, &MetricTensor::identity(2), t)
                .map_err(|e| e.to_string())?;
            let d = (&a - &b).amax();
            worst_identity = worst_identity.max(d);
            check(d <= 1e-12, || format!("W = I deviates from pidc by {d:e}"))?;
        }
    }
    Ok(format!("unit rescaling over 6 decades: {worst:.1e} rel; W = I vs pidc {worst_identity:.1e}"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("projector algebra", projector_algebra),
        ("inertia positive-definiteness", inertia_preservation),
        ("oracle equivalence", oracle_equivalence),
        ("singularity robustness", singularity_robustness),
        ("slider-crank parameterized inertia", parameterized_inertia),
        ("simulation fidelity", simulation_fidelity),
        ("projected inverse-dynamics control", pidc_regulation),
        ("constraint-force control", force_control),
        ("passive joints", passive_joints),
        ("weighted metric", weighted_metric),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.2}s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why} [{secs:.2}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

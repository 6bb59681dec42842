//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs without the libtest harness so the lines are always shown.

use linf_accel::bvp::{self, ShootingProblem, ShootingVariant};
use linf_accel::diagnostics::{self, CompareMetric, Thresholds};
use linf_accel::euclid::{natural_cubic_baseline, BoundaryData, EuclidBranch};
use linf_accel::lie::{self, ReducedSolution};
use linf_accel::manifold::{project_tangent, ManifoldId};
use linf_accel::ode::{integrate, ExtremalState, IntegrateOptions, So3ReducedState, SystemKind, Trajectory};
use linf_accel::{Rotation, Vector};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::{Duration, Instant};

type Outcome = Result<String, String>;

fn v(c: &[f64]) -> Vector {
    Vector::from_column_slice(c)
}

fn check(ok: bool, what: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what)
    }
}

fn within(got: &[f64], want: &[f64], tol: f64) -> bool {
    got.iter().zip(want).all(|(g, w)| (g - w).abs() <= tol)
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let r = f();
    (r, t.elapsed())
}

fn sphere_example() -> ExtremalState {
    ExtremalState { x: v(&[1., 0., 0.]), xdot: v(&[0., 1., 0.]), field: v(&[0., 1., 200.]), field_rate: v(&[-1., 2., 1.]), z: 1.2 }
}

fn so3_example(c: [f64; 3]) -> So3ReducedState {
    So3ReducedState { v: Vector3::new(1., 2., 3.), w: Vector3::new(-1., -4., 6.), z: 1.2, c: Vector3::from(c) }
}

fn sphere_run(rtol: f64) -> Trajectory {
    let opts = IntegrateOptions::with_tolerances(rtol, rtol * 1e-2).samples(8001);
    integrate(SystemKind::Extremal { manifold: ManifoldId::sphere(2) }, &sphere_example().pack(), (0.0, 8.0), &opts).unwrap()
}

fn so3_run(c: [f64; 3], t1: f64, samples: usize, rtol: f64) -> Trajectory {
    let opts = IntegrateOptions::with_tolerances(rtol, rtol * 1e-2).samples(samples);
    integrate(SystemKind::So3Reduced, &so3_example(c).pack(), (0.0, t1), &opts).unwrap()
}

fn head(tr: &Trajectory, n: usize) -> Vec<f64> {
    tr.final_state().iter().take(n).copied().collect()
}

const SPHERE_END: [f64; 3] = [-0.433207, 0.898726, 0.0679917];
const SO3_LONG_END: [f64; 3] = [2.36765, 4.69752, 8.40276];
const SO3_SHORT_END: [f64; 3] = [1.77133, 4.50895, 7.05963];

fn sphere_endpoint() -> Outcome {
    let (tr, dt) = timed(|| sphere_run(1e-10));
    let x = head(&tr, 3);
    check(within(&x, &SPHERE_END, 1e-3), format!("x(8) = {x:?}"))?;
    check(dt < Duration::from_secs(1), format!("took {dt:?}"))?;
    Ok(format!("x(8) = ({:.6}, {:.6}, {:.7}) in {dt:.2?}", x[0], x[1], x[2]))
}

fn so3_long() -> Outcome {
    let (tr, dt) = timed(|| so3_run([-2., -1., 0.], 700.0, 70001, 1e-10));
    let end = head(&tr, 3);
    check(within(&end, &SO3_LONG_END, 5e-3), format!("V(700) = {end:?}"))?;
    let (c, a, _) = ReducedSolution::new(tr).unwrap().drifts();
    check(c <= 1e-6 && a <= 1e-6, format!("relative drifts c {c:e}, a {a:e}"))?;
    check(dt < Duration::from_secs(10), format!("took {dt:?}"))?;
    Ok(format!("V(700) = ({:.5}, {:.5}, {:.5}), drift c {c:.1e}, a {a:.1e} in {dt:.2?}", end[0], end[1], end[2]))
}

fn so3_short() -> Outcome {
    let (tr, dt) = timed(|| so3_run([2., 1., 0.], 5.0, 5001, 1e-10));
    let end = head(&tr, 3);
    check(within(&end, &SO3_SHORT_END, 1e-4), format!("V(5) = {end:?}"))?;
    check(dt < Duration::from_secs(1), format!("took {dt:?}"))?;
    Ok(format!("V(5) = ({:.6}, {:.6}, {:.6}) in {dt:.2?}", end[0], end[1], end[2]))
}

fn euclid_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_ode: f64 = 0.0;
    let mut worst_fd: f64 = 0.0;
    for _ in 0..5 {
        let mut rv = |s: f64| v(&[rng.gen_range(-s..s), rng.gen_range(-s..s), rng.gen_range(-s..s)]);
        let (a, b, c, d) = (rv(2.0), rv(2.0), rv(1.0), rv(1.0));
        let z = 0.5 + rng.gen::<f64>() * 2.0;
        let branch = EuclidBranch::Generic { z, a: a.clone(), b: b.clone(), c, d };
        let (t0, t1) = (-1.0, 2.0);
        let exact = branch.trajectory((t0, t1), 3001).unwrap();
        let k = branch.eval(t0).unwrap();
        let s0 = ExtremalState { x: k.position, xdot: k.velocity, field: &a + &b * t0, field_rate: b.clone(), z };
        let opts = IntegrateOptions::with_tolerances(1e-13, 1e-15).samples(3001);
        let ode = integrate(SystemKind::Extremal { manifold: ManifoldId::euclidean(3) }, &s0.pack(), (t0, t1), &opts).unwrap();
        worst_ode = worst_ode.max(diagnostics::compare(&exact, &ode, CompareMetric::PointwiseMax).unwrap());
        for _ in 0..20 {
            let t = rng.gen_range(t0 + 0.01..t1 - 0.01);
            let h = 5e-4;
            let p = |s: f64| branch.eval(s).unwrap().position;
            let fd = (p(t + h) - p(t) * 2.0 + p(t - h)) / (h * h);
            let x = &a + &b * t;
            let want = &x * (z / x.norm());
            worst_fd = worst_fd.max((fd - want).norm());
        }
    }
    check(worst_ode <= 1e-8, format!("closed form vs ODE {worst_ode:e}"))?;
    check(worst_fd <= 1e-6, format!("second differences vs zX/|X| {worst_fd:e}"))?;
    Ok(format!("closed form vs ODE {worst_ode:.1e}, second differences {worst_fd:.1e} at 100 times"))
}

fn random_sphere_state(rng: &mut ChaCha8Rng) -> ExtremalState {
    let m = ManifoldId::sphere(2);
    let mut rv = || v(&[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
    let x = rv().normalize();
    let xdot = project_tangent(m, &x, &rv());
    let field = project_tangent(m, &x, &rv());
    let rate = project_tangent(m, &x, &rv()) - &x * xdot.dot(&field);
    ExtremalState { x, xdot, field, field_rate: rate, z: 0.5 + rng.gen::<f64>() }
}

fn necessary_condition_suite() -> Outcome {
    let th = Thresholds::default();
    let mut runs: Vec<(String, Trajectory)> = vec![
        ("sphere example".into(), sphere_run(1e-10)),
        ("so3 long".into(), so3_run([-2., -1., 0.], 700.0, 70001, 1e-10)),
        ("so3 short".into(), so3_run([2., 1., 0.], 5.0, 5001, 1e-10)),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..4 {
        let s = random_sphere_state(&mut rng);
        let tr = integrate(SystemKind::Extremal { manifold: ManifoldId::sphere(2) }, &s.pack(), (0.0, 2.0), &IntegrateOptions::default().samples(2001))
            .unwrap();
        runs.push((format!("random sphere {i}"), tr));
    }
    let mut worst_z: f64 = 0.0;
    let mut worst_l: f64 = 0.0;
    for (name, tr) in &runs {
        let r = diagnostics::analyze(tr, &th).unwrap();
        let (z, l) = (&r.verdicts["z_constancy"], &r.verdicts["l_residual"]);
        check(z.pass && z.metric <= 1e-6, format!("{name}: z drift {:e}", z.metric))?;
        check(l.pass && l.metric <= 1e-3 && r.l_residual_grid.unwrap() <= 1e-3, format!("{name}: L residual {:e}", l.metric))?;
        worst_z = worst_z.max(z.metric);
        worst_l = worst_l.max(l.metric);
    }
    let spline = natural_cubic_baseline(&[0., 1., 2.], &[v(&[0., 0.]), v(&[1., 1.]), v(&[2., 0.])]).unwrap();
    let r = diagnostics::analyze(&spline.trajectory(2001), &th).unwrap();
    let zs = &r.verdicts["z_constancy"];
    check(!zs.pass, format!("natural spline passed z-constancy ({:e})", zs.metric))?;
    Ok(format!(
        "{} extremals: z drift <= {worst_z:.1e}, L residual <= {worst_l:.1e}; natural spline z drift {:.2} fails",
        runs.len(),
        zs.metric
    ))
}

fn null_curve_suite() -> Outcome {
    let tr = so3_run([0., 0., 0.], 10.0, 10001, 1e-10);
    let opts = IntegrateOptions::default().samples(10001);
    let reduced = ReducedSolution::new(tr.clone()).unwrap();
    let rep = lie::classify_null(&reduced, 1e-12).unwrap();
    let drift = rep.phi_drift.unwrap();
    let residual = rep.cubic_residual.unwrap();
    let r0 = Rotation::exp(&Vector3::new(0.3, -0.2, 0.5));
    let group = lie::reconstruct(&tr, &r0).unwrap();
    let gap = lie::cubic_discrepancy(&group, &reduced, &opts).unwrap();
    check(drift <= 1e-8, format!("phi drift {drift:e}"))?;
    check(residual <= 1e-4, format!("cubic residual {residual:e}"))?;
    check(gap <= 1e-4, format!("reconstruction vs cubic {gap:e}"))?;
    Ok(format!("phi drift {drift:.1e}, cubic residual {residual:.1e}, reconstruction vs cubic {gap:.1e} at grid 1e-3"))
}

fn bvp_round_trip() -> Outcome {
    let m = ManifoldId::sphere(2);
    let s = ExtremalState { x: v(&[1., 0., 0.]), xdot: v(&[0., 1., 0.]), field: v(&[0., 0.6, 0.8]), field_rate: v(&[-0.6, 0.3, -0.2]), z: 0.9 };
    let gen = integrate(SystemKind::Extremal { manifold: m }, &s.pack(), (0.0, 1.5), &IntegrateOptions::with_tolerances(1e-12, 1e-14).samples(100))
        .unwrap();
    let end = ExtremalState::unpack(gen.final_state());
    let full = BoundaryData { x0: s.x.clone(), x1: end.x.clone(), v0: s.xdot.clone(), v1: Some(end.xdot.clone()), t0: 0.0, t1: 1.5 };
    let problem = ShootingProblem::new(m, ShootingVariant::FullVelocities, full.clone());
    check(problem.params.restarts == 32, "default restarts".into())?;
    let (res, dt) = timed(|| bvp::solve(&problem).unwrap());
    check(res.converged && res.residual <= 1e-6, format!("residual {:e}", res.residual))?;
    let agree = diagnostics::compare(&gen, &res.solution, CompareMetric::PointwiseMax).unwrap();
    check(agree <= 1e-5, format!("agreement {agree:e}"))?;

    let free = ShootingProblem::new(m, ShootingVariant::FreeEndVelocity, BoundaryData { v1: None, ..full });
    let (fres, dt2) = timed(|| bvp::solve(&free).unwrap());
    let fe = ExtremalState::unpack(fres.solution.final_state());
    check(fres.converged, format!("free-end residual {:e}", fres.residual))?;
    check(fe.field.norm() <= 1e-8, format!("|X(t1)| = {:e}", fe.field.norm()))?;
    check(dt + dt2 < Duration::from_secs(60), format!("took {:?}", dt + dt2))?;
    Ok(format!(
        "residual {:.1e}, agreement {agree:.1e} at 100 samples; free end |X(t1)| {:.1e}; {:.2?} with 32 restarts",
        res.residual,
        fe.field.norm(),
        dt + dt2
    ))
}

fn conservation_suite() -> Outcome {
    let th = Thresholds::default();
    let sphere = sphere_run(1e-10);
    let r = diagnostics::analyze(&sphere, &th).unwrap();
    let norm = r.constraint_drifts["sphere_norm"];
    let tang = r.constraint_drifts["velocity_tangency"];
    check(norm <= 1e-9 && tang <= 1e-9, format!("sphere drifts {norm:e}, {tang:e}"))?;
    let long = so3_run([-2., -1., 0.], 700.0, 70001, 1e-10);
    let (_, _, phi_rel) = ReducedSolution::new(long.clone()).unwrap().drifts();
    check(phi_rel <= 1e-6, format!("phi relation drift {phi_rel:e}"))?;

    let short = so3_run([2., 1., 0.], 5.0, 5001, 1e-10);
    let moves = [
        (head(&sphere, 3), head(&sphere_run(5e-11), 3), 1e-3),
        (head(&long, 3), head(&so3_run([-2., -1., 0.], 700.0, 70001, 5e-11), 3), 5e-3),
        (head(&short, 3), head(&so3_run([2., 1., 0.], 5.0, 5001, 5e-11), 3), 1e-4),
    ];
    let mut worst: f64 = 0.0;
    for (a, b, tol) in moves {
        let d = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        check(d < tol / 2.0, format!("endpoint moved {d:e} (limit {:e})", tol / 2.0))?;
        worst = worst.max(d / tol);
    }
    Ok(format!(
        "sphere drifts {norm:.1e}/{tang:.1e}, phi relation {phi_rel:.1e}; halving tolerances moves endpoints <= {worst:.1e} of their tolerance"
    ))
}

type Check = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Check; 8] = [
        ("1 sphere endpoint reproduction", sphere_endpoint),
        ("2 SO(3) long-run reproduction", so3_long),
        ("3 SO(3) short-run reproduction", so3_short),
        ("4 Euclidean oracle equivalence", euclid_oracle),
        ("5 necessary-condition property suite", necessary_condition_suite),
        ("6 null-curve equivalence", null_curve_suite),
        ("7 BVP round trip", bvp_round_trip),
        ("8 conservation and constraint suite", conservation_suite),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match std::panic::catch_unwind(f) {
            Ok(Ok(msg)) => println!("PASS criterion {name}: {msg}"),
            Ok(Err(msg)) => {
                failed += 1;
                println!("FAIL criterion {name}: {msg}");
            }
            Err(_) => {
                failed += 1;
                println!("FAIL criterion {name}: panicked");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

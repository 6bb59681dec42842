//! `SO(3)` specifics: conserved quantities of the reduced extremal system,
//! reconstruction of the rotation trajectory and null-curve classification.

use crate::manifold::{hat, l_operator_extrapolated, vee, Curve, GeometryError, Rotation, Vector};
use crate::ode::dopri::{OdeSystem, StepFailure, Stepper, StepperOptions};
use crate::ode::{
    integrate, CubicState, IntegrateOptions, OdeError, So3ReducedState, SystemKind, Trajectory,
};
use nalgebra::{Matrix3, Vector3};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LieError {
    #[error("expected an SO(3) trajectory, got {0}")]
    NotSo3(String),
    #[error("grid step {0} is too coarse (at most 1e-2 required)")]
    CoarseGrid(f64),
    #[error("at least {needed} samples required, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Conserved quantities `c = ‖Ẇ‖²` and `a = z‖W‖ − ⟨C,V⟩`, with
/// `Ẇ = W × V + C`.
pub fn conserved(s: &So3ReducedState) -> (f64, f64) {
    let w_rate = s.w.cross(&s.v) + s.c;
    (w_rate.norm_squared(), s.z * s.w.norm() - s.c.dot(&s.v))
}

/// `z²φ − ⟨C,V⟩` with `φ = ‖W‖/z`; constant (equal to `a`) along solutions.
pub fn phi_relation(s: &So3ReducedState) -> f64 {
    let phi = if s.z > 0.0 { s.w.norm() / s.z } else { 0.0 };
    s.z * s.z * phi - s.c.dot(&s.v)
}

/// A reduced `(V, W)` trajectory with its conserved quantities and `φ`.
#[derive(Debug, Clone)]
pub struct ReducedSolution {
    pub traj: Trajectory,
    pub c: f64,
    pub a: f64,
    /// `‖W(t)‖/z` on the trajectory grid.
    pub phi: Vec<f64>,
}

impl ReducedSolution {
    pub fn new(traj: Trajectory) -> Result<Self, LieError> {
        if traj.kind != SystemKind::So3Reduced {
            return Err(LieError::NotSo3(traj.kind.label()));
        }
        let s0 = So3ReducedState::unpack(&traj.states[0]);
        let (c, a) = conserved(&s0);
        let phi = (0..traj.len()).map(|i| traj.phi(i).unwrap_or(0.0)).collect();
        Ok(ReducedSolution { traj, c, a, phi })
    }

    pub fn state(&self, i: usize) -> So3ReducedState {
        So3ReducedState::unpack(&self.traj.states[i])
    }

    /// Largest relative drift of `c`, `a` and the `φ` relation over the grid.
    pub fn drifts(&self) -> (f64, f64, f64) {
        let rel = |v: f64, r: f64| (v - r).abs() / r.abs().max(f64::MIN_POSITIVE);
        let p0 = phi_relation(&self.state(0));
        (0..self.traj.len()).fold((0.0, 0.0, 0.0), |acc, i| {
            let s = self.state(i);
            let (c, a) = conserved(&s);
            (acc.0.max(rel(c, self.c)), acc.1.max(rel(a, self.a)), acc.2.max(rel(phi_relation(&s), p0)))
        })
    }
}

/// Rotation samples on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupTrajectory {
    pub times: Vec<f64>,
    pub rotations: Vec<Rotation>,
}

struct Frame<'a> {
    traj: &'a Trajectory,
}

impl OdeSystem for Frame<'_> {
    fn dim(&self) -> usize {
        9
    }

    fn rhs(&self, t: f64, y: &Vector, dy: &mut Vector) -> Result<(), ()> {
        let r = Matrix3::from_column_slice(y.as_slice());
        let v = self.traj.velocity_of(&self.traj.state_at(t));
        let d = r * hat(&Vector3::new(v[0], v[1], v[2]));
        dy.copy_from_slice(d.as_slice());
        Ok(())
    }

    fn project(&self, y: &mut Vector) -> bool {
        let r = Rotation::nearest(&Matrix3::from_column_slice(y.as_slice()));
        y.copy_from_slice(r.matrix().as_slice());
        true
    }
}

/// Solves `Ṙ = R·hat(V(t))` from `R(t₀) = r0`, with `V` read from the
/// reduced trajectory's dense output and the rotation re-orthonormalized
/// after every accepted step. Output is on the trajectory's own grid.
pub fn reconstruct(traj: &Trajectory, r0: &Rotation) -> Result<GroupTrajectory, LieError> {
    if traj.manifold() != crate::manifold::ManifoldId::So3 {
        return Err(LieError::NotSo3(traj.kind.label()));
    }
    if traj.len() < 2 {
        return Err(LieError::TooFewSamples { needed: 2, got: traj.len() });
    }
    let worst = traj.times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    if worst > 1e-2 * (1.0 + 1e-9) {
        return Err(LieError::CoarseGrid(worst));
    }
    let sys = Frame { traj };
    let (t0, t1) = (traj.start_time(), traj.end_time());
    let opts = StepperOptions { rtol: 1e-13, atol: 1e-15, max_steps: 50_000_000, h_max: t1 - t0 };
    let y0 = Vector::from_column_slice(r0.matrix().as_slice());
    let fail = |e: StepFailure| match e {
        StepFailure::Singular { t } => LieError::Ode(OdeError::StepSizeUnderflow { t }),
        StepFailure::Ode(e) => LieError::Ode(e),
    };
    let mut stepper = Stepper::new(&sys, t0, y0, t1, opts).map_err(fail)?;
    let mut rotations = Vec::with_capacity(traj.len());
    rotations.push(*r0);
    let mut next = 1;
    while !stepper.finished() {
        let seg = stepper.step().map_err(fail)?;
        while next < traj.len() && traj.times[next] <= seg.end() {
            let y = if next + 1 == traj.len() && stepper.finished() { stepper.state().clone() } else { seg.eval(traj.times[next]) };
            rotations.push(Rotation::nearest(&Matrix3::from_column_slice(y.as_slice())));
            next += 1;
        }
    }
    Ok(GroupTrajectory { times: traj.times.clone(), rotations })
}

/// Left-reduced velocity `V = vee(Rᵀ Ṙ)` recovered from rotation samples by
/// second-order finite differences.
pub fn recover_velocity(group: &GroupTrajectory) -> Result<Vec<Vector3<f64>>, LieError> {
    let n = group.times.len();
    if n < 3 {
        return Err(LieError::TooFewSamples { needed: 3, got: n });
    }
    let t = &group.times;
    let m = |i: usize| *group.rotations[i].matrix();
    Ok((0..n)
        .map(|i| {
            let (a, b, c) = if i == 0 {
                (0, 1, 2)
            } else if i == n - 1 {
                (n - 3, n - 2, n - 1)
            } else {
                (i - 1, i, i + 1)
            };
            let (ta, tb, tc, ti) = (t[a], t[b], t[c], t[i]);
            let wa = ((ti - tb) + (ti - tc)) / ((ta - tb) * (ta - tc));
            let wb = ((ti - ta) + (ti - tc)) / ((tb - ta) * (tb - tc));
            let wc = ((ti - ta) + (ti - tb)) / ((tc - ta) * (tc - tb));
            let dr = m(a) * wa + m(b) * wb + m(c) * wc;
            let skew = m(i).transpose() * dr;
            vee(&((skew - skew.transpose()) * 0.5))
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NullVerdict {
    Null,
    NonNull,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullReport {
    pub verdict: NullVerdict,
    pub c_norm: f64,
    /// `max |φ(t) − φ(t₀)| / φ(t₀)` (null curves only).
    pub phi_drift: Option<f64>,
    pub phi_constant: Option<bool>,
    /// Largest `‖L(V̇)‖` over the grid relative to `z`, i.e. the residual of
    /// the reduced Riemannian-cubic equation (null curves only).
    pub cubic_residual: Option<f64>,
}

/// Relative tolerance on the constancy of `φ` for null curves.
pub const PHI_CONSTANCY_TOLERANCE: f64 = 1e-8;

/// Classifies a reduced solution as null (`‖C‖ ≤ tol`) or not; for null
/// curves also measures the constancy of `φ` and the cubic residual.
pub fn classify_null(reduced: &ReducedSolution, tol: f64) -> Result<NullReport, LieError> {
    let c_norm = reduced.state(0).c.norm();
    if c_norm > tol {
        return Ok(NullReport { verdict: NullVerdict::NonNull, c_norm, phi_drift: None, phi_constant: None, cubic_residual: None });
    }
    let phi0 = reduced.phi[0];
    let phi_drift = reduced.phi.iter().map(|p| (p - phi0).abs()).fold(0.0, f64::max) / phi0.max(f64::MIN_POSITIVE);
    let cubic_residual = reduced_cubic_residual(&reduced.traj)?;
    Ok(NullReport {
        verdict: NullVerdict::Null,
        c_norm,
        phi_drift: Some(phi_drift),
        phi_constant: Some(phi_drift <= PHI_CONSTANCY_TOLERANCE),
        cubic_residual: Some(cubic_residual),
    })
}

/// `max ‖L(V̇)‖ / max ‖V̇‖` on the trajectory grid, where `L` is built on the
/// left-reduced curve with velocity `V` and evaluated to fourth order.
/// Vanishes for Riemannian cubics.
pub fn reduced_cubic_residual(traj: &Trajectory) -> Result<f64, LieError> {
    let curve = Curve::new(
        crate::manifold::ManifoldId::So3,
        traj.times.clone(),
        Vec::new(),
        (0..traj.len()).map(|i| traj.velocity(i)).collect(),
    )?;
    let acc: Vec<Vector> = (0..traj.len()).map(|i| traj.covariant_acceleration(i)).collect();
    let scale = acc.iter().map(|a| a.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    Ok(l_operator_extrapolated(&curve, &acc)?.iter().map(|v| v.norm()).fold(0.0, f64::max) / scale)
}

/// Initial data `(V, V̇, V̈)` of the Riemannian cubic through a reduced
/// extremal state, from `V̇ = zŴ` and its exact derivative.
pub fn cubic_initial_data(s: &So3ReducedState) -> CubicState {
    let w_rate = s.w.cross(&s.v) + s.c;
    let norm = s.w.norm();
    let unit = s.w / norm;
    let vddot = (w_rate - unit * unit.dot(&w_rate)) * (s.z / norm);
    let dv = |v: Vector3<f64>| Vector::from_column_slice(v.as_slice());
    CubicState { position: Vector::zeros(0), velocity: dv(s.v), acceleration: dv(unit * s.z), jerk: dv(vddot) }
}

/// Largest Frobenius distance between a reconstructed group trajectory and
/// the Riemannian cubic integrated from the same initial rotation and the
/// same initial `(V, V̇, V̈)`.
pub fn cubic_discrepancy(group: &GroupTrajectory, reduced: &ReducedSolution, opts: &IntegrateOptions) -> Result<f64, LieError> {
    let span = (reduced.traj.start_time(), reduced.traj.end_time());
    let init = cubic_initial_data(&reduced.state(0)).pack();
    let cubic = integrate(SystemKind::RiemannianCubic { manifold: crate::manifold::ManifoldId::So3 }, &init, span, &opts.samples(reduced.traj.len()))?;
    let other = reconstruct(&cubic, &group.rotations[0])?;
    Ok(group
        .rotations
        .iter()
        .zip(&other.rotations)
        .map(|(a, b)| (a.matrix() - b.matrix()).norm())
        .fold(0.0, f64::max))
}

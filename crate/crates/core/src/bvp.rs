//! Shooting for two-point boundary problems on `Eᵐ` and `Sᵐ`, and the
//! per-segment necessary-condition check for multi-point data.

use crate::diagnostics::{self, DiagnosticsError, DiagnosticsReport, Thresholds};
use crate::euclid::{hermite_cubic, BoundaryData, EuclidError};
use crate::lm::{self, LmOptions, Params};
use crate::manifold::{project_tangent, ManifoldId, Vector};
use crate::ode::{integrate, ExtremalState, IntegrateOptions, OdeError, SystemKind, Trajectory, ZeroCrossing};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BvpError {
    #[error("invalid boundary data: {0}")]
    InvalidData(String),
    #[error("shooting is not available on {0:?}")]
    UnsupportedManifold(ManifoldId),
    #[error("at least 2 knots are required, got {0}")]
    TooFewKnots(usize),
    #[error("knots must increase and lie inside the trajectory's span")]
    BadKnots,
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
}

impl From<EuclidError> for BvpError {
    fn from(e: EuclidError) -> Self {
        BvpError::InvalidData(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShootingVariant {
    /// Positions and velocities prescribed at both ends.
    #[default]
    FullVelocities,
    /// End velocity left free; the field must vanish at `t₁` instead.
    FreeEndVelocity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShootingParams {
    pub max_iterations: usize,
    pub restarts: usize,
    pub residual_tol: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Samples of the returned solution.
    pub samples: usize,
}

impl Default for ShootingParams {
    fn default() -> Self {
        ShootingParams { max_iterations: 60, restarts: 32, residual_tol: 1e-10, rtol: 1e-12, atol: 1e-14, samples: 2001 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShootingProblem {
    pub manifold: ManifoldId,
    pub variant: ShootingVariant,
    pub boundary: BoundaryData,
    pub params: ShootingParams,
}

/// Initial field data, normalized so that `‖X₀‖² + ‖Ẋ₀‖² = 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShootingUnknowns {
    pub field0: Vector,
    pub field_rate0: Vector,
    pub z: f64,
}

impl ShootingUnknowns {
    /// Rescales the field data onto the unit normalization.
    pub fn normalized(field0: Vector, field_rate0: Vector, z: f64) -> Self {
        let s = (field0.norm_squared() + field_rate0.norm_squared()).sqrt();
        let s = if s > 0.0 { s } else { 1.0 };
        ShootingUnknowns { field0: field0 / s, field_rate0: field_rate0 / s, z }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualEval {
    pub vector: Vector,
    /// First zero of the field strictly inside the span, if any.
    pub event_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShootingResult {
    pub solution: Trajectory,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub seed_index: usize,
    pub unknowns: ShootingUnknowns,
    pub event_time: Option<f64>,
    pub diagnostics: DiagnosticsReport,
}

impl ShootingProblem {
    pub fn new(manifold: ManifoldId, variant: ShootingVariant, boundary: BoundaryData) -> Self {
        ShootingProblem { manifold, variant, boundary, params: ShootingParams::default() }
    }

    pub fn validate(&self) -> Result<(), BvpError> {
        let b = &self.boundary;
        b.validate()?;
        if self.manifold.ambient_dim() != b.x0.len() {
            return Err(BvpError::InvalidData(format!(
                "points have {} coordinates, {} expects {}",
                b.x0.len(),
                self.manifold.name(),
                self.manifold.ambient_dim()
            )));
        }
        match (self.variant, &b.v1) {
            (ShootingVariant::FullVelocities, None) => return Err(BvpError::InvalidData("end velocity v1 is required".into())),
            (ShootingVariant::FreeEndVelocity, Some(_)) => {
                return Err(BvpError::InvalidData("end velocity must be omitted for the free-end variant".into()))
            }
            _ => {}
        }
        match self.manifold {
            ManifoldId::Euclidean { .. } => Ok(()),
            ManifoldId::Sphere { .. } => {
                let tol = 1e-9;
                let on = |x: &Vector| (x.norm() - 1.0).abs() <= tol;
                if !on(&b.x0) || !on(&b.x1) {
                    return Err(BvpError::InvalidData("points not on sphere (tolerance 1e-9)".into()));
                }
                let tangent_end = b.v1.as_ref().map(|v| b.x1.dot(v).abs() <= tol).unwrap_or(true);
                if b.x0.dot(&b.v0).abs() > tol || !tangent_end {
                    return Err(BvpError::InvalidData("velocities not tangent (tolerance 1e-9)".into()));
                }
                Ok(())
            }
            m => Err(BvpError::UnsupportedManifold(m)),
        }
    }

    fn system(&self) -> SystemKind {
        SystemKind::Extremal { manifold: self.manifold }
    }

    fn initial_state(&self, u: &ShootingUnknowns) -> Vector {
        ExtremalState {
            x: self.boundary.x0.clone(),
            xdot: self.boundary.v0.clone(),
            field: u.field0.clone(),
            field_rate: u.field_rate0.clone(),
            z: u.z,
        }
        .pack()
    }

    fn ivp_options(&self, samples: usize, keep_dense: bool) -> IntegrateOptions {
        IntegrateOptions {
            on_zero: ZeroCrossing::Continue,
            keep_dense,
            ..IntegrateOptions::with_tolerances(self.params.rtol, self.params.atol).samples(samples)
        }
    }

    /// Orthonormal basis of `T_{x₀}` as columns.
    fn basis(&self) -> DMatrix<f64> {
        match self.manifold {
            ManifoldId::Sphere { .. } => lm::tangent_basis(&self.boundary.x0),
            _ => DMatrix::identity(self.boundary.x0.len(), self.boundary.x0.len()),
        }
    }

    /// Unknowns from tangent coordinates `(a, b)` of `X₀` and `Ẋ₀`. On the
    /// sphere `Ẋ₀` gets the normal part forced by `⟨x, X⟩ = 0`.
    fn unknowns_from(&self, basis: &DMatrix<f64>, dir: &Vector, z: f64) -> ShootingUnknowns {
        let k = basis.ncols();
        let field = basis * dir.rows(0, k);
        let mut rate = basis * dir.rows(k, k);
        if let ManifoldId::Sphere { .. } = self.manifold {
            rate -= &self.boundary.x0 * self.boundary.v0.dot(&field);
        }
        ShootingUnknowns::normalized(field, rate, z)
    }

    fn coordinates_of(&self, basis: &DMatrix<f64>, field: &Vector, rate: &Vector) -> Vector {
        let k = basis.ncols();
        let mut d = Vector::zeros(2 * k);
        d.rows_mut(0, k).copy_from(&(basis.transpose() * field));
        d.rows_mut(k, k).copy_from(&(basis.transpose() * rate));
        d
    }
}

/// Boundary residual of the extremal started from `unknowns`:
/// `[x(t₁) − x₁; ẋ(t₁) − v₁]` or, for the free-end variant, `[x(t₁) − x₁; X(t₁)]`.
/// A zero of the field strictly inside the span is integrated through and
/// reported in [`ResidualEval::event_time`].
pub fn residual(problem: &ShootingProblem, unknowns: &ShootingUnknowns) -> Result<ResidualEval, BvpError> {
    problem.validate()?;
    let n = problem.boundary.x0.len();
    if unknowns.field0.len() != n || unknowns.field_rate0.len() != n || !(unknowns.z >= 0.0) {
        return Err(BvpError::InvalidData("unknowns do not match the problem".into()));
    }
    evaluate(problem, unknowns)
}

fn evaluate(problem: &ShootingProblem, unknowns: &ShootingUnknowns) -> Result<ResidualEval, BvpError> {
    let b = &problem.boundary;
    let n = b.x0.len();
    let tr = integrate(problem.system(), &problem.initial_state(unknowns), (b.t0, b.t1), &problem.ivp_options(2, false))?;
    let end = ExtremalState::unpack(tr.final_state());
    let mut r = Vector::zeros(2 * n);
    r.rows_mut(0, n).copy_from(&(&end.x - &b.x1));
    match (&problem.variant, &b.v1) {
        (ShootingVariant::FullVelocities, Some(v1)) => r.rows_mut(n, n).copy_from(&(&end.xdot - v1)),
        _ => r.rows_mut(n, n).copy_from(&end.field),
    }
    let cutoff = b.t1 - 1e-3 * (b.t1 - b.t0);
    let event_time = tr.events.iter().copied().find(|&t| t < cutoff);
    Ok(ResidualEval { vector: r, event_time })
}

/// Unknowns suggested by the Hermite cubic (or, with a free end, the
/// quadratic) through the boundary data: `X ∝ ∇ₜẋ` with constant `φ`.
fn hermite_guess(problem: &ShootingProblem) -> (Vector, Vector, f64) {
    let b = &problem.boundary;
    let h = b.t1 - b.t0;
    let (acc0, jerk, z) = match &b.v1 {
        Some(_) => {
            let c = &hermite_cubic(b).expect("validated").coeffs[0];
            let a0 = &c[2] * 2.0;
            let a1 = &a0 + &c[3] * (6.0 * h);
            let z = ((a0.norm_squared() + a1.norm_squared()) / 2.0).sqrt();
            (a0, &c[3] * 6.0, z)
        }
        None => {
            let a = (&b.x1 - &b.x0 - &b.v0 * h) * (2.0 / (h * h));
            let z = a.norm();
            let j = &a * (-1.0 / h);
            (a, j, z)
        }
    };
    let m = problem.manifold;
    let field = project_tangent(m, &b.x0, &acc0);
    let rate = project_tangent(m, &b.x0, &jerk);
    (field, rate, z.max(1e-3))
}

fn seeds(problem: &ShootingProblem, basis: &DMatrix<f64>) -> Vec<Params> {
    let (field, rate, z) = hermite_guess(problem);
    let k = basis.ncols();
    let mut out = Vec::with_capacity(problem.params.restarts.max(1));
    let d0 = problem.coordinates_of(basis, &field, &rate);
    let d0 = if d0.norm() > 0.0 { d0 } else { Vector::from_fn(2 * k, |i, _| if i == 0 { 1.0 } else { 0.0 }) };
    out.push(Params::new(d0, Vector::from_element(1, z)));
    for i in 1..problem.params.restarts.max(1) {
        let u = lm::halton(i - 1, 2 * k + 1);
        let dir = Vector::from_fn(2 * k, |j, _| 2.0 * u[j] - 1.0);
        let scale = (8.0f64.ln() * (2.0 * u[2 * k] - 1.0)).exp();
        out.push(Params::new(dir, Vector::from_element(1, z * scale)));
    }
    out
}

struct Attempt {
    seed: usize,
    params: Params,
    residual: f64,
    iterations: usize,
    converged: bool,
}

/// Damped Gauss–Newton (Levenberg–Marquardt) on the boundary residual from
/// deterministic quasi-random restarts, run in parallel. Among converged
/// restarts the one with the smallest `z` (the attained `J∞`) is returned;
/// otherwise the one with the smallest residual. Ties go to the lower seed.
pub fn solve(problem: &ShootingProblem) -> Result<ShootingResult, BvpError> {
    problem.validate()?;
    let basis = problem.basis();
    let opts = LmOptions { max_iterations: problem.params.max_iterations, tolerance: problem.params.residual_tol, fd_step: 1e-7 };
    let objective = |p: &Params| -> Vector {
        let u = problem.unknowns_from(&basis, &p.dir, p.scalars[0]);
        match evaluate(problem, &u) {
            Ok(e) if e.vector.iter().all(|v| v.is_finite()) => {
                let mut r = Vector::zeros(e.vector.len() + 1);
                r.rows_mut(0, e.vector.len()).copy_from(&e.vector);
                r[e.vector.len()] = if e.event_time.is_some() { 1.0 } else { 0.0 };
                r
            }
            _ => Vector::from_element(2 * problem.boundary.x0.len() + 1, f64::INFINITY),
        }
    };
    let canon = |p: &mut Params| {
        if p.scalars[0] < 0.0 {
            p.scalars[0] = -p.scalars[0];
            p.dir = -p.dir.clone();
        }
    };
    let attempts: Vec<Attempt> = seeds(problem, &basis)
        .into_par_iter()
        .enumerate()
        .map(|(seed, start)| {
            let r = lm::minimize(objective, canon, start, &opts);
            Attempt { seed, params: r.params, residual: r.residual, iterations: r.iterations, converged: r.converged }
        })
        .collect();

    let best = attempts
        .iter()
        .filter(|a| a.converged)
        .min_by(|a, b| {
            a.params.scalars[0]
                .total_cmp(&b.params.scalars[0])
                .then(a.residual.total_cmp(&b.residual))
                .then(a.seed.cmp(&b.seed))
        })
        .or_else(|| attempts.iter().min_by(|a, b| a.residual.total_cmp(&b.residual).then(a.seed.cmp(&b.seed))))
        .expect("at least one restart");

    let unknowns = problem.unknowns_from(&basis, &best.params.dir, best.params.scalars[0]);
    let eval = evaluate(problem, &unknowns)?;
    let residual = eval.vector.norm();
    let b = &problem.boundary;
    let solution = integrate(
        problem.system(),
        &problem.initial_state(&unknowns),
        (b.t0, b.t1),
        &problem.ivp_options(problem.params.samples.max(5), true),
    )?;
    let diagnostics = diagnostics::analyze(&solution, &Thresholds::default())?;
    Ok(ShootingResult {
        solution,
        residual,
        iterations: best.iterations,
        converged: best.converged && residual <= problem.params.residual_tol && eval.event_time.is_none(),
        seed_index: best.seed,
        unknowns,
        event_time: eval.event_time,
        diagnostics,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiSource {
    /// `φ ∝ ‖X‖` read from the trajectory's field.
    Field,
    /// `φ` recovered from `L(φ∇ₜẋ) = 0` in least squares.
    LeastSquares,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentReport {
    pub index: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub samples: usize,
    pub z_mean: f64,
    /// Spread `max − min` of `‖∇ₜẋ‖` over the segment.
    pub z_drift: f64,
    pub l_residual: f64,
    pub phi_source: PhiSource,
    /// `φ` at the segment's ends relative to its maximum on the segment.
    pub phi_start: f64,
    pub phi_end: f64,
    /// `‖∇ₜẋ‖` constant and `L(φ∇ₜẋ) = 0` on the segment.
    pub passes: bool,
    /// For the first (last) of several segments: whether `φ` vanishes at the
    /// first (last) knot.
    pub end_condition: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultipointReport {
    pub knots: Vec<f64>,
    pub segments: Vec<SegmentReport>,
    pub any_segment_passes: bool,
    pub phi_start_zero: bool,
    pub phi_end_zero: bool,
    /// Some segment passes and meets its end condition, if it has one.
    pub conditions_hold: bool,
}

/// Checks the necessary conditions segment by segment between consecutive
/// knots. Samples sitting exactly on interior knots are left out of both
/// neighbouring segments.
pub fn check_multipoint(traj: &Trajectory, knots: &[f64], th: &Thresholds) -> Result<MultipointReport, BvpError> {
    if knots.len() < 2 {
        return Err(BvpError::TooFewKnots(knots.len()));
    }
    let tol = 1e-9 * (traj.end_time() - traj.start_time()).abs().max(1.0);
    let inside = knots.iter().all(|&k| k >= traj.start_time() - tol && k <= traj.end_time() + tol);
    if !inside || knots.windows(2).any(|w| w[1] <= w[0]) {
        return Err(BvpError::BadKnots);
    }
    let last = knots.len() - 2;
    let mut segments = Vec::with_capacity(knots.len() - 1);
    for (j, w) in knots.windows(2).enumerate() {
        let lo_ok = |t: f64| if j == 0 { t >= w[0] - tol } else { t > w[0] + tol };
        let hi_ok = |t: f64| if j == last { t <= w[1] + tol } else { t < w[1] - tol };
        let idx: Vec<usize> = (0..traj.len()).filter(|&i| lo_ok(traj.times[i]) && hi_ok(traj.times[i])).collect();
        let (lo, hi) = match (idx.first(), idx.last()) {
            (Some(&a), Some(&b)) if b + 1 - a >= 5 => (a, b),
            _ => return Err(DiagnosticsError::TooFewSamples { needed: 5, got: idx.len() }.into()),
        };
        let piece = slice(traj, lo, hi);
        let norms: Vec<f64> = (0..piece.len()).map(|i| piece.covariant_acceleration(i).norm()).collect();
        let z_mean = norms.iter().sum::<f64>() / norms.len() as f64;
        let z_drift = norms.iter().cloned().fold(f64::MIN, f64::max) - norms.iter().cloned().fold(f64::MAX, f64::min);
        let (phi_source, l_residual, phi_start, phi_end, zero_tol) = match piece.field(0) {
            Some(_) => {
                let phi: Vec<f64> = (0..piece.len()).map(|i| piece.field(i).unwrap().norm()).collect();
                let top = phi.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
                let l = diagnostics::field_l_residual(&piece)?;
                (PhiSource::Field, l, phi[0] / top, phi[phi.len() - 1] / top, th.phi_zero)
            }
            None => {
                let (phi, l) = diagnostics::phi_least_squares(&piece, 0, piece.len() - 1)?;
                let top = phi.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
                (PhiSource::LeastSquares, l, phi[0] / top, phi[phi.len() - 1] / top, th.l_residual)
            }
        };
        let passes = z_drift <= th.z_drift && l_residual <= th.l_residual;
        let end_condition = match (knots.len() > 2, j) {
            (true, 0) => Some(phi_start.abs() <= zero_tol),
            (true, j) if j == last => Some(phi_end.abs() <= zero_tol),
            _ => None,
        };
        segments.push(SegmentReport {
            index: j,
            t_start: w[0],
            t_end: w[1],
            samples: piece.len(),
            z_mean,
            z_drift,
            l_residual,
            phi_source,
            phi_start,
            phi_end,
            passes,
            end_condition,
        });
    }
    let first = &segments[0];
    let final_seg = &segments[segments.len() - 1];
    let zero = |v: f64, s: &SegmentReport| {
        v.abs() <= if s.phi_source == PhiSource::Field { th.phi_zero } else { th.l_residual }
    };
    Ok(MultipointReport {
        knots: knots.to_vec(),
        phi_start_zero: zero(first.phi_start, first),
        phi_end_zero: zero(final_seg.phi_end, final_seg),
        any_segment_passes: segments.iter().any(|s| s.passes),
        conditions_hold: segments.iter().any(|s| s.passes && s.end_condition != Some(false)),
        segments,
    })
}

fn slice(traj: &Trajectory, lo: usize, hi: usize) -> Trajectory {
    let (a, b) = (traj.times[lo], traj.times[hi]);
    Trajectory {
        kind: traj.kind,
        times: traj.times[lo..=hi].to_vec(),
        states: traj.states[lo..=hi].to_vec(),
        events: traj.events.iter().copied().filter(|t| *t >= a && *t <= b).collect(),
        termination: crate::ode::Termination::Completed,
        stats: Default::default(),
        dense: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::euclid::{natural_cubic_baseline, solve_euclid_bvp, EuclidFitOptions};

    fn v(c: &[f64]) -> Vector {
        Vector::from_column_slice(c)
    }

    fn sphere_generator() -> (ExtremalState, Trajectory) {
        let s = ExtremalState { x: v(&[1., 0., 0.]), xdot: v(&[0., 1., 0.]), field: v(&[0., 0.6, 0.8]), field_rate: v(&[-0.6, 0.3, -0.2]), z: 0.9 };
        let opts = IntegrateOptions::with_tolerances(1e-12, 1e-14).samples(201);
        let tr = integrate(SystemKind::Extremal { manifold: ManifoldId::sphere(2) }, &s.pack(), (0.0, 1.5), &opts).unwrap();
        (s, tr)
    }

    fn boundary_of(tr: &Trajectory, free_end: bool) -> BoundaryData {
        let a = ExtremalState::unpack(&tr.states[0]);
        let b = ExtremalState::unpack(tr.final_state());
        BoundaryData { x0: a.x, x1: b.x, v0: a.xdot, v1: if free_end { None } else { Some(b.xdot) }, t0: tr.start_time(), t1: tr.end_time() }
    }

    #[test]
    fn generator_unknowns_have_tiny_residual() {
        let (s, tr) = sphere_generator();
        let p = ShootingProblem::new(ManifoldId::sphere(2), ShootingVariant::FullVelocities, boundary_of(&tr, false));
        let u = ShootingUnknowns::normalized(s.field.clone(), s.field_rate.clone(), s.z);
        let r = residual(&p, &u).unwrap();
        assert!(r.vector.norm() <= 1e-10, "{}", r.vector.norm());
        assert!(r.event_time.is_none());
        // Positive rescaling of the field data changes nothing.
        let scaled = ShootingUnknowns { field0: &u.field0 * 3.0, field_rate0: &u.field_rate0 * 3.0, z: u.z };
        assert!((residual(&p, &scaled).unwrap().vector - &r.vector).norm() < 1e-12);
        let bumped = ShootingUnknowns { z: u.z + 1e-3, ..u };
        assert!(residual(&p, &bumped).unwrap().vector.norm() >= 1e-6);
    }

    #[test]
    fn sphere_round_trip() {
        let (s, tr) = sphere_generator();
        let mut p = ShootingProblem::new(ManifoldId::sphere(2), ShootingVariant::FullVelocities, boundary_of(&tr, false));
        p.params.restarts = 8;
        let res = solve(&p).unwrap();
        assert!(res.converged, "{} {}", res.residual, res.seed_index);
        assert!((res.unknowns.z - s.z).abs() < 1e-6, "{}", res.unknowns.z);
        let err = diagnostics::compare(&tr, &res.solution, diagnostics::CompareMetric::PointwiseMax).unwrap();
        assert!(err <= 1e-5, "{err}");
        assert!(res.diagnostics.verdicts["z_constancy"].pass);
    }

    #[test]
    fn free_end_variant_zeroes_field() {
        let (_, tr) = sphere_generator();
        let mut p = ShootingProblem::new(ManifoldId::sphere(2), ShootingVariant::FreeEndVelocity, boundary_of(&tr, true));
        p.params.restarts = 8;
        let res = solve(&p).unwrap();
        assert!(res.converged, "{}", res.residual);
        let end = ExtremalState::unpack(res.solution.final_state());
        assert!(end.field.norm() <= 1e-8);
        assert!((end.x - &p.boundary.x1).norm() <= 1e-8);
    }

    #[test]
    fn euclid_shooting_matches_closed_form() {
        let data = BoundaryData { x0: v(&[0., 0.]), x1: v(&[1., 0.5]), v0: v(&[0., 1.]), v1: Some(v(&[1., 0.])), t0: 0.0, t1: 1.0 };
        let fit = solve_euclid_bvp(&data, &EuclidFitOptions::default()).unwrap();
        let mut p = ShootingProblem::new(ManifoldId::euclidean(2), ShootingVariant::FullVelocities, data);
        p.params.restarts = 8;
        let res = solve(&p).unwrap();
        assert!(res.converged);
        let exact = fit.branch.trajectory((0.0, 1.0), 101).unwrap();
        let err = diagnostics::compare(&exact, &res.solution, diagnostics::CompareMetric::PointwiseMax).unwrap();
        assert!(err <= 1e-6, "{err} z {} vs {}", res.unknowns.z, fit.branch.z());
    }

    #[test]
    fn shooting_is_deterministic() {
        let (_, tr) = sphere_generator();
        let mut p = ShootingProblem::new(ManifoldId::sphere(2), ShootingVariant::FullVelocities, boundary_of(&tr, false));
        p.params.restarts = 4;
        let a = solve(&p).unwrap();
        let b = solve(&p).unwrap();
        assert_eq!(a.unknowns, b.unknowns);
        assert_eq!(a.residual.to_bits(), b.residual.to_bits());
    }

    #[test]
    fn validation_errors() {
        let data = BoundaryData { x0: v(&[1., 0., 0.]), x1: v(&[0., 0.9, 0.]), v0: v(&[0., 1., 0.]), v1: Some(v(&[0., 0., 1.])), t0: 0.0, t1: 1.0 };
        let p = ShootingProblem::new(ManifoldId::sphere(2), ShootingVariant::FullVelocities, data.clone());
        assert!(matches!(p.validate(), Err(BvpError::InvalidData(_))));
        let p = ShootingProblem::new(ManifoldId::So3, ShootingVariant::FullVelocities, data.clone());
        assert!(p.validate().is_err());
        let p = ShootingProblem::new(ManifoldId::euclidean(3), ShootingVariant::FreeEndVelocity, data);
        assert!(p.validate().is_err());
    }

    #[test]
    fn track_sum_of_extremals_passes_every_segment() {
        let m = ManifoldId::sphere(2);
        let opts = IntegrateOptions::with_tolerances(1e-11, 1e-13).samples(1001);
        let s = ExtremalState { x: v(&[1., 0., 0.]), xdot: v(&[0., 1., 0.]), field: v(&[0., 1., 2.]), field_rate: v(&[-1., 0.5, 0.]), z: 1.0 };
        let a = integrate(SystemKind::Extremal { manifold: m }, &s.pack(), (0.0, 1.0), &opts).unwrap();
        let mut s2 = ExtremalState::unpack(a.final_state());
        s2.field = project_tangent(m, &s2.x, &v(&[1., -1., 0.5]));
        s2.field_rate = -&s2.x * s2.xdot.dot(&s2.field);
        s2.z = 0.5;
        let b = integrate(SystemKind::Extremal { manifold: m }, &s2.pack(), (1.0, 2.0), &opts).unwrap();
        let sum = Trajectory::track_sum(&[a, b]).unwrap();
        let rep = check_multipoint(&sum, &[0.0, 1.0, 2.0], &Thresholds::default()).unwrap();
        assert!(rep.segments.iter().all(|s| s.passes), "{rep:#?}");
        assert!((rep.segments[1].z_mean - 0.5).abs() < 1e-9);
        assert!(rep.any_segment_passes);
        assert!(!rep.phi_start_zero);
    }

    #[test]
    fn natural_spline_has_no_extremal_segment() {
        let s = natural_cubic_baseline(&[0., 1., 2.], &[v(&[0., 0.]), v(&[1., 1.]), v(&[2., 0.])]).unwrap();
        let rep = check_multipoint(&s.trajectory(401), &[0.0, 1.0, 2.0], &Thresholds::default()).unwrap();
        assert!(rep.segments.iter().all(|s| !s.passes && s.z_drift > 1e-3), "{rep:#?}");
        assert!(!rep.any_segment_passes);
        assert!(!rep.conditions_hold);
    }

    #[test]
    fn single_segment_and_bad_knots() {
        let (_, tr) = sphere_generator();
        let rep = check_multipoint(&tr, &[0.0, 1.5], &Thresholds::default()).unwrap();
        assert_eq!(rep.segments.len(), 1);
        assert_eq!(rep.segments[0].end_condition, None);
        assert!(rep.conditions_hold);
        assert!(matches!(check_multipoint(&tr, &[0.0], &Thresholds::default()), Err(BvpError::TooFewKnots(1))));
        assert!(matches!(check_multipoint(&tr, &[0.0, 3.0], &Thresholds::default()), Err(BvpError::BadKnots)));
    }
}

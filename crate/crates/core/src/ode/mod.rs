//! Extremal ODE systems, Riemannian cubics and their adaptive integration.
//!
//! State layouts (ambient dimension `n`):
//!
//! | system | layout |
//! |---|---|
//! | [`SystemKind::Extremal`] | `x, ẋ, X, Ẋ` (`n` each), `z` |
//! | [`SystemKind::So3Reduced`] | `V, W` (3 each), `z`, `C` (3) |
//! | [`SystemKind::RiemannianCubic`] on `Eⁿ`/`Sᵐ` | `x, ẋ, ∇ₜẋ, ∇ₜ²ẋ` |
//! | [`SystemKind::RiemannianCubic`] on `SO(3)` | `V, V̇, V̈` |
//! | [`SystemKind::Sampled`] | `x, ẋ, ∇ₜẋ` |

pub(crate) mod dopri;
mod trajectory;

pub use dopri::{DenseSegment, StepStats};
pub use trajectory::{IntegrationStats, Termination, Trajectory};

use crate::manifold::{cross, ManifoldId, Vector};
use dopri::{OdeSystem, StepFailure, Stepper, StepperOptions};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Default threshold below which a field `X` (or `W`) counts as vanished.
pub const ZERO_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("field norm {norm:e} is below the zero threshold")]
    FieldVanished { norm: f64 },
    #[error("time span [{0}, {1}] is not increasing")]
    BadSpan(f64, f64),
    #[error("state has dimension {got}, expected {expected}")]
    BadState { expected: usize, got: usize },
    #[error("state is not finite")]
    NonFinite,
    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },
    #[error("maximum number of steps exceeded at t = {t}")]
    TooManySteps { t: f64 },
    #[error("unsupported manifold {0:?} for this system")]
    UnsupportedManifold(ManifoldId),
    #[error("at least {needed} samples required, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("times must be strictly increasing")]
    NonIncreasingTimes,
    #[error("trajectories are incompatible: {0}")]
    Incompatible(String),
}

/// Which system a state vector or trajectory belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "system", rename_all = "snake_case")]
pub enum SystemKind {
    /// Optimal-curve extremal `(x, X)` on a Euclidean space or a sphere.
    Extremal { manifold: ManifoldId },
    /// Lie-reduced extremal `(V, W)` on `SO(3)`.
    So3Reduced,
    /// Riemannian cubic `∇ₜ³ẋ + R(∇ₜẋ, ẋ)ẋ = 0`.
    RiemannianCubic { manifold: ManifoldId },
    /// A curve known only through samples of position, velocity and
    /// covariant acceleration.
    Sampled { manifold: ManifoldId },
}

impl SystemKind {
    pub fn manifold(&self) -> ManifoldId {
        match *self {
            SystemKind::Extremal { manifold }
            | SystemKind::RiemannianCubic { manifold }
            | SystemKind::Sampled { manifold } => manifold,
            SystemKind::So3Reduced => ManifoldId::So3,
        }
    }

    pub fn state_dim(&self) -> usize {
        let n = self.manifold().ambient_dim();
        match self {
            SystemKind::Extremal { .. } => 4 * n + 1,
            SystemKind::So3Reduced => 10,
            SystemKind::RiemannianCubic { manifold: ManifoldId::So3 } => 9,
            SystemKind::RiemannianCubic { .. } => 4 * n,
            SystemKind::Sampled { .. } => 3 * n,
        }
    }

    pub fn label(&self) -> String {
        match self {
            SystemKind::Extremal { manifold } => format!("extremal/{}", manifold.name()),
            SystemKind::So3Reduced => "so3_reduced".into(),
            SystemKind::RiemannianCubic { manifold } => format!("riemannian_cubic/{}", manifold.name()),
            SystemKind::Sampled { manifold } => format!("sampled/{}", manifold.name()),
        }
    }

    /// Column names for each state component, in layout order.
    pub fn component_names(&self) -> Vec<String> {
        let n = self.manifold().ambient_dim();
        let block = |p: &'static str, k: usize| (0..k).map(move |i| format!("{p}{i}"));
        let mut out: Vec<String> = Vec::new();
        match self {
            SystemKind::Extremal { .. } => {
                for p in ["x", "xdot", "field", "field_rate"] {
                    out.extend(block(p, n));
                }
                out.push("z".into());
            }
            SystemKind::So3Reduced => {
                out.extend(block("v", 3));
                out.extend(block("w", 3));
                out.push("z".into());
                out.extend(block("c", 3));
            }
            SystemKind::RiemannianCubic { manifold: ManifoldId::So3 } => {
                for p in ["v", "vdot", "vddot"] {
                    out.extend(block(p, 3));
                }
            }
            SystemKind::RiemannianCubic { .. } => {
                for p in ["x", "xdot", "accel", "jerk"] {
                    out.extend(block(p, n));
                }
            }
            SystemKind::Sampled { .. } => {
                for p in ["x", "xdot", "accel"] {
                    out.extend(block(p, n));
                }
            }
        }
        out
    }

    fn check_state(&self, y: &Vector) -> Result<(), OdeError> {
        if y.len() != self.state_dim() {
            return Err(OdeError::BadState { expected: self.state_dim(), got: y.len() });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(OdeError::NonFinite);
        }
        Ok(())
    }
}

/// State of the extremal system on `Sᵐ` (or, without curvature terms, `Eᵐ`).
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremalState {
    pub x: Vector,
    pub xdot: Vector,
    pub field: Vector,
    pub field_rate: Vector,
    pub z: f64,
}

pub type SphereExtremalState = ExtremalState;

/// Time derivative of an [`ExtremalState`] (`z` is constant).
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremalDerivative {
    pub x: Vector,
    pub xdot: Vector,
    pub field: Vector,
    pub field_rate: Vector,
}

impl ExtremalState {
    pub fn pack(&self) -> Vector {
        let n = self.x.len();
        let mut y = Vector::zeros(4 * n + 1);
        y.rows_mut(0, n).copy_from(&self.x);
        y.rows_mut(n, n).copy_from(&self.xdot);
        y.rows_mut(2 * n, n).copy_from(&self.field);
        y.rows_mut(3 * n, n).copy_from(&self.field_rate);
        y[4 * n] = self.z;
        y
    }

    pub fn unpack(y: &Vector) -> Self {
        let n = (y.len() - 1) / 4;
        ExtremalState {
            x: y.rows(0, n).into_owned(),
            xdot: y.rows(n, n).into_owned(),
            field: y.rows(2 * n, n).into_owned(),
            field_rate: y.rows(3 * n, n).into_owned(),
            z: y[4 * n],
        }
    }

    /// Worst violation of the sphere constraints `‖x‖ = 1`, `⟨x,ẋ⟩ = 0`,
    /// `⟨x,X⟩ = 0`, `⟨ẋ,X⟩ + ⟨x,Ẋ⟩ = 0`, keyed by name.
    pub fn sphere_constraints(&self) -> BTreeMap<&'static str, f64> {
        BTreeMap::from([
            ("sphere_norm", (self.x.norm() - 1.0).abs()),
            ("velocity_tangency", self.x.dot(&self.xdot).abs()),
            ("field_tangency", self.x.dot(&self.field).abs()),
            ("field_rate_tangency", (self.xdot.dot(&self.field) + self.x.dot(&self.field_rate)).abs()),
        ])
    }
}

/// Extremal right-hand side on the unit sphere:
///
/// `ẍ = zX/‖X‖ − ⟨ẋ,ẋ⟩x`,
/// `Ẍ = −⟨ẋ,ẋ⟩X − (⟨ẍ,X⟩ + 2⟨ẋ,Ẋ⟩)x`.
pub fn sphere_rhs(s: &ExtremalState) -> Result<ExtremalDerivative, OdeError> {
    extremal_rhs(ManifoldId::sphere(s.x.len().saturating_sub(1)), s, ZERO_THRESHOLD, ZeroCrossing::Halt)
}

/// Flat counterpart of [`sphere_rhs`]: `ẍ = zX/‖X‖`, `Ẍ = 0`.
pub fn euclid_rhs(s: &ExtremalState) -> Result<ExtremalDerivative, OdeError> {
    extremal_rhs(ManifoldId::euclidean(s.x.len()), s, ZERO_THRESHOLD, ZeroCrossing::Halt)
}

fn extremal_rhs(
    manifold: ManifoldId,
    s: &ExtremalState,
    threshold: f64,
    mode: ZeroCrossing,
) -> Result<ExtremalDerivative, OdeError> {
    let y = s.pack();
    let mut dy = Vector::zeros(y.len());
    extremal_rhs_into(manifold, y.as_slice(), dy.as_mut_slice(), threshold, mode)?;
    let d = ExtremalState::unpack(&dy);
    Ok(ExtremalDerivative { x: d.x, xdot: d.xdot, field: d.field, field_rate: d.field_rate })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// Allocation-free extremal right-hand side on packed states
/// `(x, ẋ, X, Ẋ, z)`; the `z` slot of `dy` is set to zero.
fn extremal_rhs_into(manifold: ManifoldId, y: &[f64], dy: &mut [f64], threshold: f64, mode: ZeroCrossing) -> Result<(), OdeError> {
    let n = (y.len() - 1) / 4;
    let (x, rest) = y.split_at(n);
    let (xdot, rest) = rest.split_at(n);
    let (field, rest) = rest.split_at(n);
    let (rate, z) = rest.split_at(n);
    let z = z[0];
    let norm = dot(field, field).sqrt();
    let (dir, scale) = if norm > threshold {
        (field, 1.0 / norm)
    } else {
        match mode {
            ZeroCrossing::Halt => return Err(OdeError::FieldVanished { norm }),
            ZeroCrossing::Continue => {
                let r = dot(rate, rate).sqrt();
                if r > 0.0 {
                    (rate, 1.0 / r)
                } else {
                    return Err(OdeError::FieldVanished { norm });
                }
            }
        }
    };
    let (dx, drest) = dy.split_at_mut(n);
    let (dxdot, drest) = drest.split_at_mut(n);
    let (dfield, drest) = drest.split_at_mut(n);
    let (drate, dz) = drest.split_at_mut(n);
    dx.copy_from_slice(xdot);
    dfield.copy_from_slice(rate);
    dz[0] = 0.0;
    match manifold {
        ManifoldId::Sphere { .. } => {
            let speed2 = dot(xdot, xdot);
            for i in 0..n {
                dxdot[i] = z * scale * dir[i] - speed2 * x[i];
            }
            let coeff = dot(dxdot, field) + 2.0 * dot(xdot, rate);
            for i in 0..n {
                drate[i] = -speed2 * field[i] - coeff * x[i];
            }
            Ok(())
        }
        ManifoldId::Euclidean { .. } => {
            for i in 0..n {
                dxdot[i] = z * scale * dir[i];
                drate[i] = 0.0;
            }
            Ok(())
        }
        ManifoldId::So3 => Err(OdeError::UnsupportedManifold(manifold)),
    }
}

/// Lie-reduced extremal state on `SO(3)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct So3ReducedState {
    pub v: Vector3<f64>,
    pub w: Vector3<f64>,
    pub z: f64,
    pub c: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct So3Derivative {
    pub v: Vector3<f64>,
    pub w: Vector3<f64>,
}

impl So3ReducedState {
    pub fn pack(&self) -> Vector {
        let mut y = Vector::zeros(10);
        y.rows_mut(0, 3).copy_from(&self.v);
        y.rows_mut(3, 3).copy_from(&self.w);
        y[6] = self.z;
        y.rows_mut(7, 3).copy_from(&self.c);
        y
    }

    pub fn unpack(y: &Vector) -> Self {
        So3ReducedState {
            v: Vector3::new(y[0], y[1], y[2]),
            w: Vector3::new(y[3], y[4], y[5]),
            z: y[6],
            c: Vector3::new(y[7], y[8], y[9]),
        }
    }
}

/// `V̇ = zW/‖W‖`, `Ẇ = W × V + C`.
pub fn so3_reduced_rhs(s: &So3ReducedState) -> Result<So3Derivative, OdeError> {
    so3_rhs_with(s, ZERO_THRESHOLD, ZeroCrossing::Halt)
}

fn so3_rhs_with(s: &So3ReducedState, threshold: f64, mode: ZeroCrossing) -> Result<So3Derivative, OdeError> {
    let w_rate = s.w.cross(&s.v) + s.c;
    let norm = s.w.norm();
    let dir = if norm > threshold {
        s.w / norm
    } else {
        match (mode, w_rate.norm()) {
            (ZeroCrossing::Continue, r) if r > 0.0 => w_rate / r,
            _ => return Err(OdeError::FieldVanished { norm }),
        }
    };
    Ok(So3Derivative { v: dir * s.z, w: w_rate })
}

/// State of a Riemannian cubic.
///
/// On `Eᵐ` and `Sᵐ` the fields are `x`, `ẋ`, `∇ₜẋ`, `∇ₜ²ẋ`. On `SO(3)` the
/// cubic is handled through its left reduction and `position` is empty:
/// `velocity = V`, `acceleration = V̇`, `jerk = V̈`.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicState {
    pub position: Vector,
    pub velocity: Vector,
    pub acceleration: Vector,
    pub jerk: Vector,
}

impl CubicState {
    pub fn pack(&self) -> Vector {
        let parts = [&self.position, &self.velocity, &self.acceleration, &self.jerk];
        let data: Vec<f64> = parts.iter().flat_map(|p| p.iter().copied()).collect();
        Vector::from_vec(data)
    }

    pub fn unpack(manifold: ManifoldId, y: &Vector) -> Self {
        let n = manifold.ambient_dim();
        let block = |k: usize| y.rows(k * n, n).into_owned();
        match manifold {
            ManifoldId::So3 => CubicState { position: Vector::zeros(0), velocity: block(0), acceleration: block(1), jerk: block(2) },
            _ => CubicState { position: block(0), velocity: block(1), acceleration: block(2), jerk: block(3) },
        }
    }
}

/// First-order form of `∇ₜ³ẋ + R(∇ₜẋ, ẋ)ẋ = 0` in ambient coordinates.
///
/// On the sphere, with `a = ∇ₜẋ` and `j = ∇ₜa`:
/// `ẋ' = a − ‖ẋ‖²x`, `a' = j − ⟨ẋ,a⟩x`, `j' = −‖ẋ‖²a + ⟨a,ẋ⟩ẋ − ⟨ẋ,j⟩x`.
/// On `SO(3)` the reduced form is `V⃛ = V̈ × V`.
pub fn riemannian_cubic_rhs(manifold: ManifoldId, s: &CubicState) -> Result<CubicState, OdeError> {
    match manifold {
        ManifoldId::Euclidean { .. } => Ok(CubicState {
            position: s.velocity.clone(),
            velocity: s.acceleration.clone(),
            acceleration: s.jerk.clone(),
            jerk: Vector::zeros(s.jerk.len()),
        }),
        ManifoldId::Sphere { .. } => {
            let (x, v, a, j) = (&s.position, &s.velocity, &s.acceleration, &s.jerk);
            let speed2 = v.dot(v);
            Ok(CubicState {
                position: v.clone(),
                velocity: a - x * speed2,
                acceleration: j - x * v.dot(a),
                jerk: a * -speed2 + v * a.dot(v) - x * v.dot(j),
            })
        }
        ManifoldId::So3 => Ok(CubicState {
            position: Vector::zeros(0),
            velocity: s.acceleration.clone(),
            acceleration: s.jerk.clone(),
            jerk: cross(&s.jerk, &s.velocity),
        }),
    }
}

/// What to do when the field `X` (or `W`) passes through zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroCrossing {
    /// Stop and report the crossing time.
    #[default]
    Halt,
    /// Record the crossing and continue, using the right limit `Ẋ/‖Ẋ‖` of
    /// the forcing direction while `‖X‖` is below the threshold.
    Continue,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Number of uniformly spaced output samples, endpoints included.
    pub samples: usize,
    pub zero_threshold: f64,
    pub on_zero: ZeroCrossing,
    /// Re-project sphere states onto the constraint set after each step.
    pub project: bool,
    /// Keep the per-step dense output inside the trajectory.
    pub keep_dense: bool,
    pub max_steps: usize,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            rtol: 1e-10,
            atol: 1e-12,
            samples: 2048,
            zero_threshold: ZERO_THRESHOLD,
            on_zero: ZeroCrossing::Halt,
            project: true,
            keep_dense: true,
            max_steps: 50_000_000,
        }
    }
}

impl IntegrateOptions {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        IntegrateOptions { rtol, atol, ..Default::default() }
    }

    pub fn samples(mut self, n: usize) -> Self {
        self.samples = n;
        self
    }
}

struct Rhs {
    kind: SystemKind,
    threshold: f64,
    mode: ZeroCrossing,
    project: bool,
}

impl Rhs {
    fn field_norm(&self, y: &Vector) -> Option<f64> {
        self.field(y).map(|f| f.norm())
    }

    fn field(&self, y: &Vector) -> Option<Vector> {
        match self.kind {
            SystemKind::Extremal { manifold } => {
                let n = manifold.ambient_dim();
                Some(y.rows(2 * n, n).into_owned())
            }
            SystemKind::So3Reduced => Some(y.rows(3, 3).into_owned()),
            _ => None,
        }
    }

    fn eval(&self, y: &Vector) -> Result<Vector, OdeError> {
        match self.kind {
            SystemKind::Extremal { manifold } => {
                let d = extremal_rhs(manifold, &ExtremalState::unpack(y), self.threshold, self.mode)?;
                Ok(ExtremalState { x: d.x, xdot: d.xdot, field: d.field, field_rate: d.field_rate, z: 0.0 }.pack())
            }
            SystemKind::So3Reduced => {
                let d = so3_rhs_with(&So3ReducedState::unpack(y), self.threshold, self.mode)?;
                Ok(So3ReducedState { v: d.v, w: d.w, z: 0.0, c: Vector3::zeros() }.pack())
            }
            SystemKind::RiemannianCubic { manifold } => {
                Ok(riemannian_cubic_rhs(manifold, &CubicState::unpack(manifold, y))?.pack())
            }
            SystemKind::Sampled { .. } => Err(OdeError::Incompatible("sampled curves cannot be integrated".into())),
        }
    }
}

impl OdeSystem for Rhs {
    fn dim(&self) -> usize {
        self.kind.state_dim()
    }

    fn rhs(&self, _t: f64, y: &Vector, dy: &mut Vector) -> Result<(), ()> {
        if let SystemKind::Extremal { manifold } = self.kind {
            return extremal_rhs_into(manifold, y.as_slice(), dy.as_mut_slice(), self.threshold, self.mode).map_err(|_| ());
        }
        let d = self.eval(y).map_err(|_| ())?;
        dy.copy_from(&d);
        Ok(())
    }

    fn project(&self, y: &mut Vector) -> bool {
        if !self.project {
            return false;
        }
        match self.kind {
            SystemKind::Extremal { manifold: ManifoldId::Sphere { .. } } => {
                project_packed(y.as_mut_slice());
                true
            }
            SystemKind::RiemannianCubic { manifold: ManifoldId::Sphere { .. } } => {
                let n = y.len() / 4;
                let x = y.rows(0, n).normalize();
                y.rows_mut(0, n).copy_from(&x);
                for k in 1..4 {
                    let b = y.rows(k * n, n).into_owned();
                    let p = &b - &x * b.dot(&x);
                    y.rows_mut(k * n, n).copy_from(&p);
                }
                true
            }
            _ => false,
        }
    }
}

/// Restores `‖x‖ = 1` and the tangency conditions of `ẋ`, `X` and `Ẋ`.
pub fn project_extremal(manifold: ManifoldId, s: &mut ExtremalState) {
    if let ManifoldId::Sphere { .. } = manifold {
        let mut y = s.pack();
        project_packed(y.as_mut_slice());
        *s = ExtremalState::unpack(&y);
    }
}

fn project_packed(y: &mut [f64]) {
    let n = (y.len() - 1) / 4;
    let (x, rest) = y.split_at_mut(n);
    let (xdot, rest) = rest.split_at_mut(n);
    let (field, rest) = rest.split_at_mut(n);
    let rate = &mut rest[..n];
    let r = dot(x, x).sqrt();
    x.iter_mut().for_each(|v| *v /= r);
    for b in [&mut *xdot, &mut *field] {
        let p = dot(x, b);
        b.iter_mut().zip(x.iter()).for_each(|(v, xi)| *v -= p * xi);
    }
    let defect = dot(xdot, field) + dot(x, rate);
    rate.iter_mut().zip(x.iter()).for_each(|(v, xi)| *v -= defect * xi);
}

/// Integrates `system` from `s0` over `span`.
///
/// Returns a trajectory sampled on a uniform grid of `opts.samples` points
/// plus the adaptive steps' dense output. When the field vanishes and
/// `opts.on_zero` is [`ZeroCrossing::Halt`], the trajectory stops at the
/// refined crossing time with [`Termination::FieldVanished`].
pub fn integrate(
    system: SystemKind,
    s0: &Vector,
    span: (f64, f64),
    opts: &IntegrateOptions,
) -> Result<Trajectory, OdeError> {
    let (t0, t1) = span;
    if !(t0 < t1) || !t0.is_finite() || !t1.is_finite() {
        return Err(OdeError::BadSpan(t0, t1));
    }
    system.check_state(s0)?;
    if opts.samples < 2 {
        return Err(OdeError::TooFewSamples { needed: 2, got: opts.samples });
    }
    if let SystemKind::Sampled { .. } = system {
        return Err(OdeError::Incompatible("sampled curves cannot be integrated".into()));
    }
    if let SystemKind::Extremal { manifold: ManifoldId::So3 } | SystemKind::Extremal { manifold: ManifoldId::Sphere { dim: 0 } } =
        system
    {
        return Err(OdeError::UnsupportedManifold(system.manifold()));
    }
    let rhs = Rhs { kind: system, threshold: opts.zero_threshold, mode: opts.on_zero, project: opts.project };
    let grid: Vec<f64> = (0..opts.samples)
        .map(|k| if k + 1 == opts.samples { t1 } else { t0 + (t1 - t0) * k as f64 / (opts.samples - 1) as f64 })
        .collect();

    let mut out = trajectory::Builder::new(system, &grid, opts.keep_dense);
    out.push_sample(t0, s0.clone());

    let halt_at_start = opts.on_zero == ZeroCrossing::Halt
        && rhs.field_norm(s0).map(|n| n <= opts.zero_threshold).unwrap_or(false);
    if halt_at_start {
        return Ok(out.finish_event(t0, s0.clone(), StepStats::default()));
    }

    let sopts = StepperOptions { rtol: opts.rtol, atol: opts.atol, max_steps: opts.max_steps, h_max: (t1 - t0) / 4.0 };
    let mut stepper = match Stepper::new(&rhs, t0, s0.clone(), t1, sopts) {
        Ok(s) => s,
        Err(StepFailure::Singular { t }) => return Ok(out.finish_event(t, s0.clone(), StepStats::default())),
        Err(StepFailure::Ode(e)) => return Err(e),
    };
    out.track_drift(&rhs.kind, s0);
    while !stepper.finished() {
        let seg = match stepper.step() {
            Ok(seg) => seg,
            Err(StepFailure::Singular { t }) => {
                let y = stepper.state().clone();
                if opts.on_zero == ZeroCrossing::Halt && rhs.field_norm(&y).is_some() {
                    return Ok(out.finish_event(t, y, stepper.stats));
                }
                return Err(OdeError::StepSizeUnderflow { t });
            }
            Err(StepFailure::Ode(e)) => return Err(e),
        };
        if rhs.field_norm(&seg.eval(seg.t)).is_some() {
            if let Some((t_min, crossing)) = find_zero(&rhs, &seg, opts.zero_threshold) {
                match opts.on_zero {
                    ZeroCrossing::Halt => {
                        out.push_segment_until(&seg, crossing);
                        let y = seg.eval(crossing);
                        return Ok(out.finish_event(crossing, y, stepper.stats));
                    }
                    ZeroCrossing::Continue => out.record_event(t_min),
                }
            }
        }
        out.push_segment(&seg);
        out.track_drift(&rhs.kind, &seg.eval(seg.end()));
    }
    let y_end = stepper.state().clone();
    Ok(out.finish(t1, y_end, stepper.stats))
}

/// Looks for `‖X(t)‖ ≤ threshold` inside one step. Returns the time of the
/// minimum of `‖X‖` and the first threshold crossing (bisection-refined).
fn find_zero(rhs: &Rhs, seg: &DenseSegment, threshold: f64) -> Option<(f64, f64)> {
    let norm_at = |t: f64| rhs.field_norm(&seg.eval(t)).unwrap_or(f64::INFINITY);
    const PROBES: usize = 16;
    let ts: Vec<f64> = (0..=PROBES).map(|k| seg.t + seg.h * k as f64 / PROBES as f64).collect();
    let fields: Vec<Vector> = ts.iter().filter_map(|&t| rhs.field(&seg.eval(t))).collect();
    if fields.len() != ts.len() {
        return None;
    }
    let vals: Vec<f64> = fields.iter().map(|f| f.norm()).collect();
    // Between probes the field stays within about one probe-to-probe change
    // of its neighbours, so a step whose probes all clear that margin holds
    // no zero.
    let spread = fields.windows(2).map(|w| (&w[1] - &w[0]).norm()).fold(0.0, f64::max);
    if vals.iter().all(|&v| v > threshold + 2.0 * spread) {
        return None;
    }
    let (imin, _) = vals.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    // Golden-section refinement of the minimum around the best probe.
    let (mut a, mut b) = (ts[imin.saturating_sub(1)], ts[(imin + 1).min(PROBES)]);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
    let (mut fc, mut fd) = (norm_at(c), norm_at(d));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = norm_at(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = norm_at(d);
        }
        if b - a < 1e-15 * seg.t.abs().max(1.0) {
            break;
        }
    }
    let (t_min, f_min) = if fc < fd { (c, fc) } else { (d, fd) };
    let (t_min, f_min) = if vals[imin] <= f_min { (ts[imin], vals[imin]) } else { (t_min, f_min) };
    if f_min > threshold {
        return None;
    }
    let (mut lo, mut hi) = (seg.t, t_min);
    if norm_at(lo) <= threshold {
        return Some((t_min, lo));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if norm_at(mid) > threshold {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * hi.abs().max(1.0) {
            break;
        }
    }
    Some((t_min, hi))
}

//! Closed-form optimal curves in `Eᵐ`, boundary-value fitting, natural cubic
//! splines and exact `J∞` of piecewise polynomials.
//!
//! Wherever the field `A + Bt` is nonzero the acceleration of an extremal is
//! `z(A + Bt)/‖A + Bt‖`. Three shapes arise:
//!
//! * `Geodesic`: `z = 0`, an affine segment;
//! * `QuadraticSpline`: `A`, `B` dependent, acceleration `z·sign(t − t₂)·B̂`,
//!   a `C¹` piecewise quadratic with its kink at `t₂`;
//! * `Generic`: `A`, `B` independent.

use crate::lm::{self, LmOptions, Params};
use crate::manifold::{ManifoldId, Vector};
use crate::ode::{ExtremalState, SystemKind, Trajectory};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EuclidError {
    #[error("invalid branch: {0}")]
    InvalidBranch(String),
    #[error("invalid boundary data: {0}")]
    InvalidData(String),
    #[error("no branch fitted the boundary data (best residual {best:e})")]
    NoConvergence { best: f64 },
    #[error("knot times must be strictly increasing")]
    DuplicateKnots,
    #[error("at least {needed} knots required, got {got}")]
    TooFewKnots { needed: usize, got: usize },
}

/// One closed-form extremal. Vectors all have the same dimension.
#[derive(Debug, Clone, PartialEq)]
pub enum EuclidBranch {
    Geodesic { c: Vector, d: Vector },
    /// `A = −B·t₂`.
    QuadraticSpline { z: f64, b: Vector, t2: f64, c: Vector, d: Vector },
    Generic { z: f64, a: Vector, b: Vector, c: Vector, d: Vector },
}

/// Position, velocity and acceleration at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct Kinematics {
    pub position: Vector,
    pub velocity: Vector,
    pub acceleration: Vector,
}

/// Relative size below which `A` and `B` count as linearly dependent.
const DEPENDENCE_TOL: f64 = 1e-12;

/// Generic closed form after the shift `τ = t − tₛ` that makes the shifted
/// `A'` orthogonal to `B`.
struct Shifted {
    z: f64,
    a: Vector,
    b: Vector,
    alpha: f64,
    beta: f64,
    ts: f64,
}

impl Shifted {
    fn new(z: f64, a: &Vector, b: &Vector) -> Shifted {
        let beta = b.norm();
        let ts = -a.dot(b) / (beta * beta);
        let a = a + b * ts;
        Shifted { z, alpha: a.norm(), a, b: b.clone(), beta, ts }
    }

    /// `(p, ṗ, p̈)` of the particular solution with `p(tₛ)`, `ṗ(tₛ)` given by
    /// the closed form's constants.
    fn eval(&self, t: f64) -> (Vector, Vector, Vector) {
        let (z, al, be) = (self.z, self.alpha, self.beta);
        let tau = t - self.ts;
        let s = (al * al + be * be * tau * tau).sqrt();
        // log(βτ + s) written to stay accurate for negative τ.
        let lg = if al > 0.0 { al.ln() + (be * tau / al).asinh() } else { 0.0 };
        let a_part = if al > 0.0 { &self.a * 1.0 } else { Vector::zeros(self.a.len()) };
        let pos = &a_part * (z * (be * tau * lg - s) / (be * be)) + &self.b * (z * (al * al * lg + be * tau * s) / (2.0 * be.powi(3)));
        let vel = &a_part * (z * lg / be) + &self.b * (z * s / (be * be));
        let dir = &a_part + &self.b * tau;
        let acc = if s > 0.0 { dir * (z / s) } else { &self.b * (z / be) };
        (pos, vel, acc)
    }
}

fn sign_right(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

impl EuclidBranch {
    pub fn dim(&self) -> usize {
        match self {
            EuclidBranch::Geodesic { c, .. }
            | EuclidBranch::QuadraticSpline { c, .. }
            | EuclidBranch::Generic { c, .. } => c.len(),
        }
    }

    pub fn z(&self) -> f64 {
        match self {
            EuclidBranch::Geodesic { .. } => 0.0,
            EuclidBranch::QuadraticSpline { z, .. } | EuclidBranch::Generic { z, .. } => *z,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EuclidBranch::Geodesic { .. } => "geodesic",
            EuclidBranch::QuadraticSpline { .. } => "quadratic_spline",
            EuclidBranch::Generic { .. } => "generic",
        }
    }

    /// The field `(A, B)` with `X(t) = A + Bt`, if the branch has one.
    pub fn field(&self) -> Option<(Vector, Vector)> {
        match self {
            EuclidBranch::Geodesic { .. } => None,
            EuclidBranch::QuadraticSpline { b, t2, .. } => Some((b * -*t2, b.clone())),
            EuclidBranch::Generic { a, b, .. } => Some((a.clone(), b.clone())),
        }
    }

    pub fn validate(&self) -> Result<(), EuclidError> {
        let bad = |m: &str| Err(EuclidError::InvalidBranch(m.to_string()));
        let m = self.dim();
        let vecs: Vec<&Vector> = match self {
            EuclidBranch::Geodesic { c, d } => vec![c, d],
            EuclidBranch::QuadraticSpline { b, c, d, .. } => vec![b, c, d],
            EuclidBranch::Generic { a, b, c, d, .. } => vec![a, b, c, d],
        };
        if vecs.iter().any(|v| v.len() != m) {
            return bad("vector dimensions differ");
        }
        if vecs.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return bad("non-finite entries");
        }
        match self {
            EuclidBranch::Geodesic { .. } => Ok(()),
            EuclidBranch::QuadraticSpline { z, b, t2, .. } => {
                if !(*z >= 0.0) || !t2.is_finite() {
                    bad("z must be nonnegative and t2 finite")
                } else if b.norm() == 0.0 {
                    bad("B must be nonzero")
                } else {
                    Ok(())
                }
            }
            EuclidBranch::Generic { z, a, b, .. } => {
                if !(*z >= 0.0) {
                    return bad("z must be nonnegative");
                }
                let beta = b.norm();
                if beta == 0.0 {
                    return bad("A and B must be linearly independent");
                }
                let sh = Shifted::new(*z, a, b);
                if sh.alpha <= DEPENDENCE_TOL * a.norm().max(beta) {
                    return bad("A and B must be linearly independent");
                }
                Ok(())
            }
        }
    }

    /// Position, velocity and acceleration at `t`. At the kink of a
    /// quadratic spline the acceleration is the right limit.
    pub fn eval(&self, t: f64) -> Result<Kinematics, EuclidError> {
        self.validate()?;
        Ok(self.eval_unchecked(t))
    }

    fn eval_unchecked(&self, t: f64) -> Kinematics {
        match self {
            EuclidBranch::Geodesic { c, d } => {
                Kinematics { position: c * t + d, velocity: c.clone(), acceleration: Vector::zeros(c.len()) }
            }
            EuclidBranch::QuadraticSpline { z, b, t2, c, d } => {
                let u = b.normalize();
                let s = t - t2;
                let sg = sign_right(s);
                Kinematics {
                    position: &u * (0.5 * z * sg * s * s) + c * t + d,
                    velocity: &u * (z * s.abs()) + c,
                    acceleration: u * (z * sg),
                }
            }
            EuclidBranch::Generic { z, a, b, c, d } => {
                let (p, v, acc) = Shifted::new(*z, a, b).eval(t);
                Kinematics { position: p + c * t + d, velocity: v + c, acceleration: acc }
            }
        }
    }

    /// `φ(t) = ‖A + Bt‖/z`; `None` for geodesics.
    pub fn phi(&self, t: f64) -> Option<f64> {
        let (a, b) = self.field()?;
        let z = self.z();
        (z > 0.0).then(|| (a + b * t).norm() / z)
    }

    /// Samples the branch on `n` uniform times over `span` as an extremal
    /// trajectory (`X = A + Bt`), or as a sampled curve for geodesics.
    pub fn trajectory(&self, span: (f64, f64), n: usize) -> Result<Trajectory, EuclidError> {
        self.validate()?;
        let m = self.dim();
        let times: Vec<f64> = (0..n)
            .map(|k| if k + 1 == n { span.1 } else { span.0 + (span.1 - span.0) * k as f64 / (n - 1) as f64 })
            .collect();
        let manifold = ManifoldId::euclidean(m);
        let states: Vec<Vector> = match self.field() {
            None => times
                .iter()
                .map(|&t| {
                    let k = self.eval_unchecked(t);
                    let mut y = Vector::zeros(3 * m);
                    y.rows_mut(0, m).copy_from(&k.position);
                    y.rows_mut(m, m).copy_from(&k.velocity);
                    y
                })
                .collect(),
            Some((a, b)) => times
                .iter()
                .map(|&t| {
                    let k = self.eval_unchecked(t);
                    ExtremalState { x: k.position, xdot: k.velocity, field: &a + &b * t, field_rate: b.clone(), z: self.z() }.pack()
                })
                .collect(),
        };
        let kind = match self.field() {
            None => SystemKind::Sampled { manifold },
            Some(_) => SystemKind::Extremal { manifold },
        };
        Trajectory::from_samples(kind, times, states).map_err(|e| EuclidError::InvalidBranch(e.to_string()))
    }

    /// JSON description with named constants.
    pub fn to_json(&self) -> serde_json::Value {
        let v = |x: &Vector| x.iter().copied().collect::<Vec<f64>>();
        match self {
            EuclidBranch::Geodesic { c, d } => serde_json::json!({"branch": "geodesic", "z": 0.0, "c": v(c), "d": v(d)}),
            EuclidBranch::QuadraticSpline { z, b, t2, c, d } => serde_json::json!({
                "branch": "quadratic_spline", "z": z, "a": v(&(b * -*t2)), "b": v(b), "t2": t2, "c": v(c), "d": v(d)
            }),
            EuclidBranch::Generic { z, a, b, c, d } => {
                serde_json::json!({"branch": "generic", "z": z, "a": v(a), "b": v(b), "c": v(c), "d": v(d)})
            }
        }
    }
}

/// Positions and velocities prescribed at the ends of `[t0, t1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    pub x0: Vector,
    pub x1: Vector,
    pub v0: Vector,
    pub v1: Option<Vector>,
    pub t0: f64,
    pub t1: f64,
}

impl BoundaryData {
    pub fn validate(&self) -> Result<(), EuclidError> {
        let m = self.x0.len();
        if !(self.t0 < self.t1) {
            return Err(EuclidError::InvalidData("t0 must be less than t1".into()));
        }
        let dims_ok = self.x1.len() == m && self.v0.len() == m && self.v1.as_ref().map(|v| v.len() == m).unwrap_or(true);
        if !dims_ok || m == 0 {
            return Err(EuclidError::InvalidData("vector dimensions differ".into()));
        }
        Ok(())
    }

    fn require_v1(&self) -> Result<&Vector, EuclidError> {
        self.v1.as_ref().ok_or_else(|| EuclidError::InvalidData("end velocity v1 is required".into()))
    }
}

/// Boundary residual `[x(t₁) − x₁; ẋ(t₁) − v₁]` of a branch whose `C`, `D`
/// were already matched at `t₀`.
fn boundary_residual(branch: &EuclidBranch, data: &BoundaryData, v1: &Vector) -> Vector {
    let k = branch.eval_unchecked(data.t1);
    let m = data.x0.len();
    let mut r = Vector::zeros(2 * m);
    r.rows_mut(0, m).copy_from(&(k.position - &data.x1));
    r.rows_mut(m, m).copy_from(&(k.velocity - v1));
    r
}

/// Builds the branch with field `A + Bt` (classified by dependence) whose
/// position and velocity match the data at `t₀`.
fn branch_from_field(z: f64, a: &Vector, b: &Vector, data: &BoundaryData) -> EuclidBranch {
    let m = a.len();
    let zero = Vector::zeros(m);
    let span = data.t1 - data.t0;
    let beta = b.norm();
    let shape = if beta * span <= DEPENDENCE_TOL * a.norm() {
        // Constant direction: a quadratic with its kink before the span.
        EuclidBranch::QuadraticSpline { z, b: a.normalize(), t2: data.t0, c: zero.clone(), d: zero.clone() }
    } else {
        let sh = Shifted::new(z, a, b);
        if sh.alpha <= DEPENDENCE_TOL * beta * span.max(1.0) {
            canonical_spline(z, b, sh.ts, data)
        } else {
            EuclidBranch::Generic { z, a: a.clone(), b: b.clone(), c: zero.clone(), d: zero.clone() }
        }
    };
    match_start(shape, data)
}

/// Quadratic spline with `t₂` moved into `[t₀, t₁]` without changing the
/// curve on the span.
fn canonical_spline(z: f64, b: &Vector, t2: f64, data: &BoundaryData) -> EuclidBranch {
    let zero = Vector::zeros(b.len());
    let u = b.normalize();
    let (u, t2) = if t2 < data.t0 {
        (u, data.t0)
    } else if t2 > data.t1 {
        (-u, data.t0)
    } else {
        (u, t2)
    };
    EuclidBranch::QuadraticSpline { z, b: u, t2, c: zero.clone(), d: zero }
}

/// Sets `C`, `D` so that position and velocity match at `t₀`.
fn match_start(branch: EuclidBranch, data: &BoundaryData) -> EuclidBranch {
    let k = branch.eval_unchecked(data.t0);
    let c_shift = &data.v0 - &k.velocity;
    let d_shift = &data.x0 - &k.position - &c_shift * data.t0;
    match branch {
        EuclidBranch::Geodesic { c, d } => EuclidBranch::Geodesic { c: c + c_shift, d: d + d_shift },
        EuclidBranch::QuadraticSpline { z, b, t2, c, d } => {
            EuclidBranch::QuadraticSpline { z, b, t2, c: c + c_shift, d: d + d_shift }
        }
        EuclidBranch::Generic { z, a, b, c, d } => EuclidBranch::Generic { z, a, b, c: c + c_shift, d: d + d_shift },
    }
}

/// Options for [`solve_euclid_bvp`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EuclidFitOptions {
    pub max_iterations: usize,
    /// Number of seeds tried per branch shape (beyond the cubic-derived one).
    pub restarts: usize,
    pub tolerance: f64,
}

impl Default for EuclidFitOptions {
    fn default() -> Self {
        EuclidFitOptions { max_iterations: 200, restarts: 16, tolerance: 1e-9 }
    }
}

/// A converged branch and its boundary residual norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub branch: EuclidBranch,
    pub residual: f64,
}

/// Result of [`solve_euclid_bvp`]: the selected branch plus every
/// converged candidate (distinct up to `1e-6` in `z`), sorted by `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct EuclidFit {
    pub branch: EuclidBranch,
    pub residual: f64,
    pub candidates: Vec<Candidate>,
}

/// Fits an extremal to two-point position/velocity data.
///
/// Tries a geodesic first, then the generic field family seeded from the
/// Hermite cubic and from quasi-random directions, then quadratic splines.
/// Returns the converged branch of smallest `z` (ties favour the earlier
/// shape), together with all converged candidates.
pub fn solve_euclid_bvp(data: &BoundaryData, opts: &EuclidFitOptions) -> Result<EuclidFit, EuclidError> {
    data.validate()?;
    let v1 = data.require_v1()?.clone();
    let m = data.x0.len();
    let (t0, t1) = (data.t0, data.t1);
    let span = t1 - t0;
    let tm = 0.5 * (t0 + t1);
    let half = 0.5 * span;
    let scale = data.x0.norm().max(data.x1.norm()).max(data.v0.norm() * span).max(v1.norm() * span).max(1.0);

    let mut found: Vec<Candidate> = Vec::new();
    let chord = (&data.x1 - &data.x0) / span;
    let geo_err = (&data.v0 - &chord).norm().max((&v1 - &chord).norm());
    if geo_err * span <= opts.tolerance {
        let g = match_start(EuclidBranch::Geodesic { c: chord.clone(), d: Vector::zeros(m) }, data);
        let residual = boundary_residual(&g, data, &v1).norm();
        found.push(Candidate { branch: g, residual });
    }

    let lm_opts = LmOptions { max_iterations: opts.max_iterations, tolerance: opts.tolerance * 0.1, fd_step: 1e-7 };
    let flip = |p: &mut Params| {
        if p.scalars[0] < 0.0 {
            p.scalars[0] = -p.scalars[0];
            p.dir = -p.dir.clone();
        }
    };

    // Generic family: direction (A', B') in rescaled time s = (t − tm)/half,
    // so that A + Bt = A' + B'(t − tm)/half.
    let field_of = |p: &Params| {
        let a_s = p.dir.rows(0, m).into_owned();
        let b_s = p.dir.rows(m, m).into_owned() / half;
        let a = &a_s - &b_s * tm;
        (a, b_s)
    };
    let generic_residual = |p: &Params| {
        let (a, b) = field_of(p);
        let br = branch_from_field(p.scalars[0], &a, &b, data);
        boundary_residual(&br, data, &v1) / scale
    };
    let herm = hermite_cubic(data)?;
    let mut seeds: Vec<Params> = Vec::new();
    {
        // The cubic's acceleration is affine: P + Q(t − tm).
        let k = herm.eval(tm);
        let q = herm.coeffs[0][3].clone() * 6.0;
        let mut dir = Vector::zeros(2 * m);
        dir.rows_mut(0, m).copy_from(&k.acceleration);
        dir.rows_mut(m, m).copy_from(&(q * half));
        let z0 = herm.j_infinity().max(1e-3);
        if dir.norm() > 0.0 {
            seeds.push(Params::new(dir, Vector::from_column_slice(&[z0])));
        }
    }
    let z_guess = (((&v1 - &data.v0).norm() / span).max((&chord - &data.v0).norm() * 2.0 / span)).max(1e-3);
    for i in 0..opts.restarts {
        let h = lm::halton(i, 2 * m + 1);
        let dir = Vector::from_iterator(2 * m, h[..2 * m].iter().map(|x| 2.0 * x - 1.0));
        if dir.norm() < 1e-3 {
            continue;
        }
        seeds.push(Params::new(dir, Vector::from_column_slice(&[z_guess * (0.5 + 2.0 * h[2 * m])])));
    }
    for seed in seeds {
        let res = lm::minimize(generic_residual, flip, seed, &lm_opts);
        let (a, b) = field_of(&res.params);
        let br = branch_from_field(res.params.scalars[0], &a, &b, data);
        push_candidate(&mut found, br, data, &v1, opts.tolerance);
    }

    // Quadratic splines: direction B̂, scalars (z, t₂ in rescaled time).
    let spline_residual = |p: &Params| {
        let t2 = tm + half * p.scalars[1];
        let br = match_start(canonical_spline(p.scalars[0], &p.dir, t2, data), data);
        boundary_residual(&br, data, &v1) / scale
    };
    let base_dir = if (&v1 - &data.v0).norm() > 0.0 { &v1 - &data.v0 } else { herm.eval(t0).acceleration };
    let mut spline_seeds = Vec::new();
    for s2 in [-1.5, -0.5, 0.0, 0.5] {
        if base_dir.norm() > 0.0 {
            spline_seeds.push(Params::new(base_dir.clone(), Vector::from_column_slice(&[z_guess, s2])));
            spline_seeds.push(Params::new(-base_dir.clone(), Vector::from_column_slice(&[z_guess, s2])));
        }
    }
    for i in 0..opts.restarts.min(8) {
        let h = lm::halton(i + 101, m + 2);
        let dir = Vector::from_iterator(m, h[..m].iter().map(|x| 2.0 * x - 1.0));
        if dir.norm() < 1e-3 {
            continue;
        }
        spline_seeds.push(Params::new(dir, Vector::from_column_slice(&[z_guess * (0.5 + 2.0 * h[m]), 2.0 * h[m + 1] - 1.0])));
    }
    for seed in spline_seeds {
        let res = lm::minimize(spline_residual, flip, seed, &lm_opts);
        let t2 = tm + half * res.params.scalars[1];
        let br = match_start(canonical_spline(res.params.scalars[0], &res.params.dir, t2, data), data);
        push_candidate(&mut found, br, data, &v1, opts.tolerance);
    }

    if found.is_empty() {
        return Err(EuclidError::NoConvergence { best: f64::INFINITY });
    }
    let order = |b: &EuclidBranch| match b {
        EuclidBranch::Geodesic { .. } => 0,
        EuclidBranch::Generic { .. } => 1,
        EuclidBranch::QuadraticSpline { .. } => 2,
    };
    found.sort_by(|x, y| {
        let (zx, zy) = (x.branch.z(), y.branch.z());
        if (zx - zy).abs() <= 1e-9 * zx.max(zy).max(1.0) {
            order(&x.branch).cmp(&order(&y.branch)).then(x.residual.total_cmp(&y.residual))
        } else {
            zx.total_cmp(&zy)
        }
    });
    let best = found[0].clone();
    Ok(EuclidFit { branch: best.branch, residual: best.residual, candidates: found })
}

fn push_candidate(found: &mut Vec<Candidate>, br: EuclidBranch, data: &BoundaryData, v1: &Vector, tol: f64) {
    if br.validate().is_err() {
        return;
    }
    let residual = boundary_residual(&br, data, v1).norm();
    if !(residual <= tol) {
        return;
    }
    let z = br.z();
    if let Some(existing) = found.iter_mut().find(|c| c.branch.name() == br.name() && (c.branch.z() - z).abs() <= 1e-6 * z.max(1.0)) {
        if residual < existing.residual {
            *existing = Candidate { branch: br, residual };
        }
        return;
    }
    found.push(Candidate { branch: br, residual });
}

/// Piecewise polynomial in `Eᵐ`: on `[breaks[i], breaks[i+1]]` the value is
/// `Σₖ coeffs[i][k]·(t − breaks[i])ᵏ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewisePolynomial {
    pub breaks: Vec<f64>,
    pub coeffs: Vec<Vec<Vector>>,
}

impl PiecewisePolynomial {
    pub fn dim(&self) -> usize {
        self.coeffs[0][0].len()
    }

    pub fn degree(&self) -> usize {
        self.coeffs.iter().map(|c| c.len().saturating_sub(1)).max().unwrap_or(0)
    }

    fn piece(&self, t: f64) -> usize {
        let n = self.coeffs.len();
        self.breaks[1..n].partition_point(|&b| b <= t).min(n - 1)
    }

    /// Value and first two derivatives at `t` (pieces are closed on the
    /// right only at the final break).
    pub fn eval(&self, t: f64) -> Kinematics {
        let i = self.piece(t);
        let s = t - self.breaks[i];
        let m = self.dim();
        let mut p = Vector::zeros(m);
        let mut vel = Vector::zeros(m);
        let mut acc = Vector::zeros(m);
        for (k, c) in self.coeffs[i].iter().enumerate() {
            let kf = k as f64;
            p += c * s.powi(k as i32);
            if k >= 1 {
                vel += c * (kf * s.powi(k as i32 - 1));
            }
            if k >= 2 {
                acc += c * (kf * (kf - 1.0) * s.powi(k as i32 - 2));
            }
        }
        Kinematics { position: p, velocity: vel, acceleration: acc }
    }

    /// `∫‖ẍ‖² dt`.
    pub fn j2(&self) -> f64 {
        (0..self.coeffs.len())
            .map(|i| {
                let h = self.breaks[i + 1] - self.breaks[i];
                if self.coeffs[i].len() <= 4 {
                    // Acceleration P + Qs is affine on the piece.
                    let p = self.coeffs[i].get(2).map(|c| c * 2.0).unwrap_or_else(|| Vector::zeros(self.dim()));
                    let q = self.coeffs[i].get(3).map(|c| c * 6.0).unwrap_or_else(|| Vector::zeros(self.dim()));
                    p.norm_squared() * h + p.dot(&q) * h * h + q.norm_squared() * h.powi(3) / 3.0
                } else {
                    simpson(|t| self.eval(t).acceleration.norm_squared(), self.breaks[i], self.breaks[i + 1], 2000)
                }
            })
            .sum()
    }

    /// `max ‖ẍ‖`: exact for pieces of degree ≤ 3 (the norm of an affine map
    /// is convex, so its maximum sits at a piece end), dense sampling with
    /// golden-section refinement otherwise.
    pub fn j_infinity(&self) -> f64 {
        j_infinity_euclid(self, 4096)
    }

    /// Samples the curve as `(x, ẋ, ẍ)` on `n` uniform times.
    pub fn trajectory(&self, n: usize) -> Trajectory {
        let (a, b) = (self.breaks[0], *self.breaks.last().unwrap());
        let m = self.dim();
        let times: Vec<f64> = (0..n).map(|k| if k + 1 == n { b } else { a + (b - a) * k as f64 / (n - 1) as f64 }).collect();
        let states = times
            .iter()
            .map(|&t| {
                let k = self.eval(t);
                let mut y = Vector::zeros(3 * m);
                y.rows_mut(0, m).copy_from(&k.position);
                y.rows_mut(m, m).copy_from(&k.velocity);
                y.rows_mut(2 * m, m).copy_from(&k.acceleration);
                y
            })
            .collect();
        Trajectory::from_samples(SystemKind::Sampled { manifold: ManifoldId::euclidean(m) }, times, states)
            .expect("uniform grid is increasing")
    }
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        s += f(a + h * k as f64) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// `J∞ = max ‖ẍ‖` of a piecewise polynomial; `grid` is the number of samples
/// per piece used when a piece has degree above 3.
pub fn j_infinity_euclid(curve: &PiecewisePolynomial, grid: usize) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..curve.coeffs.len() {
        let (a, b) = (curve.breaks[i], curve.breaks[i + 1]);
        let norm_at = |t: f64| {
            let s = t - a;
            curve.coeffs[i]
                .iter()
                .enumerate()
                .skip(2)
                .fold(Vector::zeros(curve.dim()), |acc, (k, c)| acc + c * ((k * (k - 1)) as f64 * s.powi(k as i32 - 2)))
                .norm()
        };
        if curve.coeffs[i].len() <= 4 {
            best = best.max(norm_at(a)).max(norm_at(b));
            continue;
        }
        let n = grid.max(8);
        let (mut arg, mut val) = (a, norm_at(a));
        for k in 1..=n {
            let t = a + (b - a) * k as f64 / n as f64;
            let v = norm_at(t);
            if v > val {
                arg = t;
                val = v;
            }
        }
        let step = (b - a) / n as f64;
        let (mut lo, mut hi) = ((arg - step).max(a), (arg + step).min(b));
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..100 {
            let (c, d) = (hi - g * (hi - lo), lo + g * (hi - lo));
            if norm_at(c) > norm_at(d) {
                hi = d;
            } else {
                lo = c;
            }
        }
        best = best.max(val).max(norm_at(0.5 * (lo + hi)));
    }
    best
}

/// The cubic polynomial matching positions and velocities at both ends.
pub fn hermite_cubic(data: &BoundaryData) -> Result<PiecewisePolynomial, EuclidError> {
    data.validate()?;
    let v1 = data.require_v1()?;
    let h = data.t1 - data.t0;
    let dx = &data.x1 - &data.x0;
    let c2 = (&dx * 3.0 / (h * h)) - (&data.v0 * 2.0 + v1) / h;
    let c3 = (&dx * -2.0 / h.powi(3)) + (&data.v0 + v1) / (h * h);
    Ok(PiecewisePolynomial { breaks: vec![data.t0, data.t1], coeffs: vec![vec![data.x0.clone(), data.v0.clone(), c2, c3]] })
}

/// Natural cubic spline through `(times[i], points[i])` (zero second
/// derivative at both ends).
pub fn natural_cubic_baseline(times: &[f64], points: &[Vector]) -> Result<PiecewisePolynomial, EuclidError> {
    let n = times.len();
    if n < 2 {
        return Err(EuclidError::TooFewKnots { needed: 2, got: n });
    }
    if points.len() != n {
        return Err(EuclidError::InvalidData(format!("{n} knot times but {} points", points.len())));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(EuclidError::DuplicateKnots);
    }
    let m = points[0].len();
    if points.iter().any(|p| p.len() != m) {
        return Err(EuclidError::InvalidData("vector dimensions differ".into()));
    }
    let h: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    // Second derivatives M_i with M_0 = M_{n−1} = 0, tridiagonal system for
    // the interior ones solved by the Thomas algorithm.
    let mut mm = vec![Vector::zeros(m); n];
    if n > 2 {
        let k = n - 2;
        let mut diag: Vec<f64> = (0..k).map(|i| 2.0 * (h[i] + h[i + 1])).collect();
        let mut rhs: Vec<Vector> = (0..k)
            .map(|i| ((&points[i + 2] - &points[i + 1]) / h[i + 1] - (&points[i + 1] - &points[i]) / h[i]) * 6.0)
            .collect();
        for i in 1..k {
            let w = h[i] / diag[i - 1];
            diag[i] -= w * h[i];
            let prev = rhs[i - 1].clone();
            rhs[i] -= prev * w;
        }
        mm[k] = &rhs[k - 1] / diag[k - 1];
        for i in (0..k - 1).rev() {
            mm[i + 1] = (&rhs[i] - &mm[i + 2] * h[i + 1]) / diag[i];
        }
    }
    let coeffs = (0..n - 1)
        .map(|i| {
            let hi = h[i];
            let slope = (&points[i + 1] - &points[i]) / hi;
            let b = slope - (&mm[i] * 2.0 + &mm[i + 1]) * (hi / 6.0);
            vec![points[i].clone(), b, &mm[i] * 0.5, (&mm[i + 1] - &mm[i]) / (6.0 * hi)]
        })
        .collect();
    Ok(PiecewisePolynomial { breaks: times.to_vec(), coeffs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(c: &[f64]) -> Vector {
        Vector::from_column_slice(c)
    }

    fn generic() -> EuclidBranch {
        EuclidBranch::Generic { z: 1.0, a: v(&[1., 0.]), b: v(&[0., 1.]), c: v(&[0., 0.]), d: v(&[0., 0.]) }
    }

    #[test]
    fn branch_examples() {
        let g = EuclidBranch::Geodesic { c: v(&[1., 0.]), d: v(&[0., 0.]) };
        let k = g.eval(2.0).unwrap();
        assert_eq!(k.position, v(&[2., 0.]));
        assert_eq!(k.acceleration, v(&[0., 0.]));

        let q = EuclidBranch::QuadraticSpline { z: 1.0, b: v(&[0., 1.]), t2: 0.0, c: v(&[0., 0.]), d: v(&[0., 0.]) };
        assert_eq!(q.eval(-1.0).unwrap().acceleration, v(&[0., -1.]));
        assert_eq!(q.eval(1.0).unwrap().acceleration, v(&[0., 1.]));
        assert_eq!(q.eval(0.0).unwrap().acceleration, v(&[0., 1.]));
        let (l, r) = (q.eval(-1e-9).unwrap(), q.eval(1e-9).unwrap());
        assert!((l.position - r.position).norm() < 1e-12 && (l.velocity - r.velocity).norm() < 1e-8);

        assert_abs_diff_eq!(generic().eval(0.0).unwrap().acceleration, v(&[1., 0.]), epsilon = 1e-15);
    }

    #[test]
    fn invalid_branches_are_rejected() {
        let dep = EuclidBranch::Generic { z: 1.0, a: v(&[1., 0.]), b: v(&[2., 0.]), c: v(&[0., 0.]), d: v(&[0., 0.]) };
        assert!(dep.eval(0.0).is_err());
        let zero_b = EuclidBranch::QuadraticSpline { z: 1.0, b: v(&[0., 0.]), t2: 0.0, c: v(&[0., 0.]), d: v(&[0., 0.]) };
        assert!(zero_b.eval(0.0).is_err());
        let neg = EuclidBranch::Generic { z: -1.0, a: v(&[1., 0.]), b: v(&[0., 1.]), c: v(&[0., 0.]), d: v(&[0., 0.]) };
        assert!(neg.validate().is_err());
    }

    #[test]
    fn generic_position_differentiates_to_acceleration() {
        let br = EuclidBranch::Generic { z: 1.3, a: v(&[1., 0.5, -0.2]), b: v(&[0.3, 1., 0.7]), c: v(&[0.1, 0., 2.]), d: v(&[1., 1., 1.]) };
        let (z, a, b) = (1.3, v(&[1., 0.5, -0.2]), v(&[0.3, 1., 0.7]));
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = 1e-3;
        for _ in 0..20 {
            let t: f64 = rng.gen_range(-3.0..3.0);
            let p = |s: f64| br.eval(s).unwrap().position;
            let fd = (p(t + h) - p(t) * 2.0 + p(t - h)) / (h * h);
            let exact = (&a + &b * t) * (z / (&a + &b * t).norm());
            assert!((&fd - &exact).norm() < 1e-6, "t={t}: {}", (fd - exact).norm());
            let vfd = (p(t + h) - p(t - h)) / (2.0 * h);
            assert!((vfd - br.eval(t).unwrap().velocity).norm() < 1e-6);
        }
    }

    #[test]
    fn acceleration_norm_is_z() {
        let q = EuclidBranch::QuadraticSpline { z: 1.2, b: v(&[0., 3., 4.]), t2: 0.3, c: v(&[1., 0., 0.]), d: v(&[0., 0., 0.]) };
        for k in 0..=100 {
            let t = -1.0 + 0.02 * k as f64;
            assert_abs_diff_eq!(generic().eval(t).unwrap().acceleration.norm(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(q.eval(t).unwrap().acceleration.norm(), 1.2, epsilon = 1e-12);
        }
    }

    #[test]
    fn geodesic_data_gives_geodesic() {
        let data = BoundaryData { x0: v(&[0., 0.]), x1: v(&[1., 0.]), v0: v(&[1., 0.]), v1: Some(v(&[1., 0.])), t0: 0.0, t1: 1.0 };
        let fit = solve_euclid_bvp(&data, &EuclidFitOptions::default()).unwrap();
        assert_eq!(fit.branch.name(), "geodesic");
        assert_eq!(fit.branch.z(), 0.0);
    }

    #[test]
    fn turnaround_data_beats_hermite_cubic() {
        let data = BoundaryData { x0: v(&[0., 0.]), x1: v(&[0., 0.]), v0: v(&[1., 0.]), v1: Some(v(&[-1., 0.])), t0: 0.0, t1: 2.0 };
        let fit = solve_euclid_bvp(&data, &EuclidFitOptions::default()).unwrap();
        assert!(fit.branch.z() > 0.0);
        assert!(fit.residual < 1e-9);
        assert!(fit.branch.z() <= hermite_cubic(&data).unwrap().j_infinity() + 1e-12);
        assert_abs_diff_eq!(fit.branch.z(), 1.0, epsilon = 1e-8);
    }

    #[test]
    fn generic_round_trip() {
        let gen = EuclidBranch::Generic { z: 0.8, a: v(&[1., -0.5]), b: v(&[0.4, 1.2]), c: v(&[0.3, 0.1]), d: v(&[0., 1.]) };
        let (t0, t1) = (-0.7, 1.1);
        let (k0, k1) = (gen.eval(t0).unwrap(), gen.eval(t1).unwrap());
        let data = BoundaryData { x0: k0.position, x1: k1.position, v0: k0.velocity, v1: Some(k1.velocity), t0, t1 };
        let fit = solve_euclid_bvp(&data, &EuclidFitOptions::default()).unwrap();
        assert!(fit.candidates.iter().any(|c| (c.branch.z() - 0.8).abs() < 1e-6));
        let rec = fit.candidates.iter().find(|c| (c.branch.z() - 0.8).abs() < 1e-6).unwrap();
        for k in 0..=50 {
            let t = t0 + (t1 - t0) * k as f64 / 50.0;
            let d = (rec.branch.eval(t).unwrap().position - gen.eval(t).unwrap().position).norm();
            assert!(d < 1e-6, "t={t} d={d}");
        }
        assert!(fit.branch.z() <= 0.8 + 1e-9);
    }

    #[test]
    fn quadratic_spline_round_trip() {
        let gen = EuclidBranch::QuadraticSpline { z: 2.0, b: v(&[0.6, 0.8]), t2: 0.4, c: v(&[1., 0.]), d: v(&[0., 0.]) };
        let (k0, k1) = (gen.eval(0.0).unwrap(), gen.eval(1.0).unwrap());
        let data = BoundaryData { x0: k0.position, x1: k1.position, v0: k0.velocity, v1: Some(k1.velocity), t0: 0.0, t1: 1.0 };
        let fit = solve_euclid_bvp(&data, &EuclidFitOptions::default()).unwrap();
        assert!(fit.residual < 1e-9);
        assert!(fit.branch.z() <= 2.0 + 1e-9);
    }

    #[test]
    fn natural_spline_examples() {
        let two = natural_cubic_baseline(&[0., 1.], &[v(&[0., 0.]), v(&[1., 2.])]).unwrap();
        assert_eq!(two.j_infinity(), 0.0);
        let line = natural_cubic_baseline(&[0., 1., 2.], &[v(&[0., 0.]), v(&[1., 1.]), v(&[2., 2.])]).unwrap();
        assert!(line.j_infinity() < 1e-14);

        let pts = [v(&[0., 0.]), v(&[1., 0.]), v(&[0., 0.])];
        let s = natural_cubic_baseline(&[0., 1., 2.], &pts).unwrap();
        for (t, p) in [0., 1., 2.].iter().zip(&pts) {
            assert!((s.eval(*t).position - p).norm() < 1e-14);
        }
        assert_abs_diff_eq!(s.eval(0.0).acceleration.norm(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.eval(2.0).acceleration.norm(), 0.0, epsilon = 1e-14);
        let (l, r) = (s.eval(1.0 - 1e-12), s.eval(1.0));
        assert!((l.acceleration - r.acceleration).norm() < 1e-9);
        let dense = (0..=200_000).map(|k| s.eval(2.0 * k as f64 / 200_000.0).acceleration.norm()).fold(0.0, f64::max);
        assert_abs_diff_eq!(s.j_infinity(), dense, epsilon = 1e-9);
        assert_abs_diff_eq!(s.j_infinity(), 3.0, epsilon = 1e-12);

        assert!(matches!(natural_cubic_baseline(&[0., 0.], &pts[..2]), Err(EuclidError::DuplicateKnots)));
    }

    #[test]
    fn j_infinity_of_cubic_and_quartic() {
        let cubic = PiecewisePolynomial { breaks: vec![0., 1.], coeffs: vec![vec![v(&[0., 0.]), v(&[0., 0.]), v(&[0., 0.]), v(&[1., 0.])]] };
        assert_eq!(j_infinity_euclid(&cubic, 10), 6.0);
        // x = t⁴ − t³ on [0, 1]: ẍ = 12t² − 6t peaks at t = 1 with value 6;
        // on [0, 0.5] the peak of |ẍ| is at t = 1/4 with value 0.75.
        let quartic = PiecewisePolynomial {
            breaks: vec![0., 0.5],
            coeffs: vec![vec![v(&[0.]), v(&[0.]), v(&[0.]), v(&[-1.]), v(&[1.])]],
        };
        assert_abs_diff_eq!(j_infinity_euclid(&quartic, 64), 0.75, epsilon = 1e-12);
    }

    #[test]
    fn j2_matches_quadrature() {
        let s = natural_cubic_baseline(&[0., 1., 2.5], &[v(&[0., 0.]), v(&[1., 0.]), v(&[0., 1.])]).unwrap();
        let num = simpson(|t| s.eval(t).acceleration.norm_squared(), 0.0, 1.0, 2000) + simpson(|t| s.eval(t).acceleration.norm_squared(), 1.0, 2.5, 2000);
        assert_abs_diff_eq!(s.j2(), num, epsilon = 1e-10);
    }

    #[test]
    fn spline_phi_vanishes_only_at_kink() {
        let q = EuclidBranch::QuadraticSpline { z: 1.0, b: v(&[1., 0.]), t2: 0.25, c: v(&[0., 0.]), d: v(&[0., 0.]) };
        assert_eq!(q.phi(0.25), Some(0.0));
        assert!(q.phi(0.5).unwrap() > 0.0);
    }
}

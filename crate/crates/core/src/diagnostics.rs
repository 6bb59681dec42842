//! Drift, residual and `J∞` measurements with pass/fail verdicts.

use crate::lie;
use crate::manifold::{l_operator_fd, Curve, GeometryError, ManifoldId, Vector};
use crate::ode::{ExtremalState, OdeError, So3ReducedState, SystemKind, Trajectory};
use nalgebra::DMatrix;
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagnosticsError {
    #[error("at least {needed} samples required, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("time spans do not overlap")]
    DisjointSpans,
    #[error("trajectories live in different spaces")]
    Incompatible,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

/// Verdict thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    /// Largest allowed deviation of `‖∇ₜẋ‖` from `z`.
    pub z_drift: f64,
    /// Relative drift of conserved quantities.
    pub conserved: f64,
    /// `max ‖L(φ∇ₜẋ)‖ / max ‖φ∇ₜẋ‖`.
    pub l_residual: f64,
    /// Grid step at which the `L` residual is measured (the trajectory is
    /// resampled from its dense output when coarser).
    pub l_residual_grid: f64,
    /// `|‖x‖ − 1|` and `|⟨x, ẋ⟩|`.
    pub sphere_constraint: f64,
    /// `|⟨x, X⟩| / max ‖X‖` and the matching condition on `Ẋ`.
    pub field_tangency: f64,
    /// `φ` counts as zero below this fraction of its maximum.
    pub phi_zero: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            z_drift: 1e-6,
            conserved: 1e-6,
            l_residual: 1e-3,
            l_residual_grid: 1e-3,
            sphere_constraint: 1e-9,
            field_tangency: 1e-8,
            phi_zero: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Verdict {
    pub metric: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Verdict {
    pub fn new(metric: f64, threshold: f64) -> Self {
        Verdict { metric, threshold, pass: metric <= threshold }
    }
}

/// Measurements on one trajectory. Serializes to a stable JSON shape.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub schema_version: u32,
    pub system: String,
    pub samples: usize,
    pub span: [f64; 2],
    pub z: Option<f64>,
    /// `max |‖∇ₜẋ‖ − z|` (or the spread of `‖∇ₜẋ‖` when there is no `z`).
    pub z_drift: f64,
    pub constraint_drifts: BTreeMap<String, f64>,
    /// Relative `L` residual (see [`Thresholds::l_residual`]).
    pub l_residual_max: Option<f64>,
    pub l_residual_grid: Option<f64>,
    pub j_inf: f64,
    pub phi_min: Option<f64>,
    pub phi_zero_times: Vec<f64>,
    /// `max ‖∇ₜẋ (finite differences) − ∇ₜẋ (state)‖`; informational.
    pub fd_acceleration_error: Option<f64>,
    pub verdicts: BTreeMap<String, Verdict>,
    pub all_pass: bool,
}

/// Computes every applicable metric for the trajectory's system.
pub fn analyze(traj: &Trajectory, th: &Thresholds) -> Result<DiagnosticsReport, DiagnosticsError> {
    let n = traj.len();
    if n < 5 {
        return Err(DiagnosticsError::TooFewSamples { needed: 5, got: n });
    }
    let mut verdicts = BTreeMap::new();
    let acc_norms: Vec<f64> = (0..n).map(|i| traj.covariant_acceleration(i).norm()).collect();
    let j_inf = acc_norms.iter().cloned().fold(0.0, f64::max);
    let z = traj.z();
    let z_drift = match z {
        Some(z) => acc_norms.iter().map(|a| (a - z).abs()).fold(0.0, f64::max),
        None => j_inf - acc_norms.iter().cloned().fold(f64::INFINITY, f64::min),
    };
    verdicts.insert("z_constancy".to_string(), Verdict::new(z_drift, th.z_drift));

    let constraint_drifts = constraint_drifts(traj);
    for (k, v) in &constraint_drifts {
        let t = match k.as_str() {
            "sphere_norm" | "velocity_tangency" => th.sphere_constraint,
            "field_tangency" | "field_rate_tangency" => th.field_tangency,
            _ => th.conserved,
        };
        verdicts.insert(k.clone(), Verdict::new(*v, t));
    }

    let (l_residual_max, l_residual_grid) = match l_residual_measure(traj, th.l_residual_grid)? {
        Some((r, h)) => {
            verdicts.insert("l_residual".to_string(), Verdict::new(r, th.l_residual));
            (Some(r), Some(h))
        }
        None => (None, None),
    };

    let phi: Option<Vec<f64>> = z.filter(|z| *z > 0.0).map(|_| (0..n).map(|i| traj.phi(i).unwrap_or(0.0)).collect());
    let phi_min = phi.as_ref().map(|p| p.iter().cloned().fold(f64::INFINITY, f64::min));
    let phi_zero_times = zero_times(traj, th.phi_zero);

    let fd_acceleration_error = fd_acceleration_error(traj).ok();
    let all_pass = verdicts.values().all(|v| v.pass);
    Ok(DiagnosticsReport {
        schema_version: SCHEMA_VERSION,
        system: traj.kind.label(),
        samples: n,
        span: [traj.start_time(), traj.end_time()],
        z,
        z_drift,
        constraint_drifts,
        l_residual_max,
        l_residual_grid,
        j_inf,
        phi_min,
        phi_zero_times,
        fd_acceleration_error,
        verdicts,
        all_pass,
    })
}

/// `J∞`: largest norm of the covariant acceleration over the samples.
pub fn j_infinity(traj: &Trajectory) -> f64 {
    (0..traj.len()).map(|i| traj.covariant_acceleration(i).norm()).fold(0.0, f64::max)
}

fn constraint_drifts(traj: &Trajectory) -> BTreeMap<String, f64> {
    let n = traj.len();
    let mut out = BTreeMap::new();
    let mut put = |k: &str, v: f64| {
        let e = out.entry(k.to_string()).or_insert(0.0);
        *e = f64::max(*e, v);
    };
    match traj.kind {
        SystemKind::Extremal { manifold: ManifoldId::Sphere { .. } } => {
            let scale = (0..n).map(|i| traj.field(i).unwrap().norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
            for y in &traj.states {
                let s = ExtremalState::unpack(y);
                let c = s.sphere_constraints();
                put("sphere_norm", c["sphere_norm"]);
                put("velocity_tangency", c["velocity_tangency"]);
                put("field_tangency", c["field_tangency"] / scale);
                put("field_rate_tangency", c["field_rate_tangency"] / scale);
            }
        }
        SystemKind::RiemannianCubic { manifold: ManifoldId::Sphere { .. } } | SystemKind::Sampled { manifold: ManifoldId::Sphere { .. } } => {
            for i in 0..n {
                let (x, v) = (traj.configuration(i), traj.velocity(i));
                put("sphere_norm", (x.norm() - 1.0).abs());
                put("velocity_tangency", x.dot(&v).abs());
            }
        }
        SystemKind::So3Reduced => {
            let s0 = So3ReducedState::unpack(&traj.states[0]);
            let (c0, a0) = lie::conserved(&s0);
            let p0 = lie::phi_relation(&s0);
            let rel = |v: f64, r: f64| (v - r).abs() / r.abs().max(f64::MIN_POSITIVE);
            put("c", 0.0);
            put("a", 0.0);
            put("phi_relation", 0.0);
            for y in &traj.states {
                let s = So3ReducedState::unpack(y);
                let (c, a) = lie::conserved(&s);
                put("c", rel(c, c0));
                put("a", rel(a, a0));
                put("phi_relation", rel(lie::phi_relation(&s), p0));
            }
            for (k, v) in &traj.stats.max_drift {
                put(k, *v);
            }
        }
        _ => {}
    }
    out
}

/// Relative `L` residual and the grid step it was measured on.
fn l_residual_measure(traj: &Trajectory, grid: f64) -> Result<Option<(f64, f64)>, DiagnosticsError> {
    match traj.kind {
        SystemKind::Extremal { .. } | SystemKind::So3Reduced | SystemKind::RiemannianCubic { .. } => {}
        SystemKind::Sampled { .. } => {
            let (_, r) = phi_least_squares(traj, 0, traj.len() - 1)?;
            return Ok(Some((r, (traj.end_time() - traj.start_time()) / (traj.len() - 1) as f64)));
        }
    }
    let (a, b) = (traj.start_time(), traj.end_time());
    let step = (b - a) / (traj.len() - 1) as f64;
    let uniform = crate::manifold::uniform_step(&traj.times).is_ok();
    if (step <= grid * (1.0 + 1e-9) && uniform) || traj.dense.is_empty() {
        return Ok(Some((field_l_residual(traj)?, step)));
    }
    // Resample from the dense output in overlapping chunks.
    let total = ((b - a) / grid).ceil() as usize;
    let h = (b - a) / total as f64;
    let chunk = 50_000usize;
    let (mut num, mut den): (f64, f64) = (0.0, 0.0);
    let mut start = 0usize;
    while start < total {
        let end = (start + chunk).min(total);
        let lo = start.saturating_sub(1);
        let hi = (end + 1).min(total);
        if hi - lo + 1 < 5 {
            break;
        }
        let ta = a + h * lo as f64;
        let tb = if hi == total { b } else { a + h * hi as f64 };
        let piece = traj.resample(ta, tb, hi - lo + 1);
        let (r, s) = l_residual_parts(&piece)?;
        num = num.max(r);
        den = den.max(s);
        start = end;
    }
    Ok(Some((num / den.max(f64::MIN_POSITIVE), h)))
}

/// Relative `L` residual of `φ∇ₜẋ` on the trajectory's own grid.
pub fn field_l_residual(traj: &Trajectory) -> Result<f64, DiagnosticsError> {
    if traj.len() < 5 {
        return Err(DiagnosticsError::TooFewSamples { needed: 5, got: traj.len() });
    }
    let (r, s) = l_residual_parts(traj)?;
    Ok(r / s.max(f64::MIN_POSITIVE))
}

/// `(max ‖L(Y)‖, max ‖Y‖)` for `Y = φ∇ₜẋ`, which is `X` (or `W`) for
/// extremals and `∇ₜẋ` itself for Riemannian cubics.
fn l_residual_parts(traj: &Trajectory) -> Result<(f64, f64), DiagnosticsError> {
    let curve = traj.curve()?;
    let field: Vec<Vector> = match traj.kind {
        SystemKind::Extremal { .. } | SystemKind::So3Reduced => (0..traj.len()).map(|i| traj.field(i).unwrap()).collect(),
        _ => (0..traj.len()).map(|i| traj.covariant_acceleration(i)).collect(),
    };
    let res = l_operator_fd(&curve, &field)?;
    let r = res.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let s = field.iter().map(|v| v.norm()).fold(0.0, f64::max);
    Ok((r, s))
}

/// Recovers `φ ≥ 0` (up to scale) on samples `lo..=hi` so that
/// `L(φ∇ₜẋ) ≈ 0` in least squares, on at most 200 evenly spaced samples.
/// Returns `φ` on those samples and the relative residual.
pub fn phi_least_squares(traj: &Trajectory, lo: usize, hi: usize) -> Result<(Vec<f64>, f64), DiagnosticsError> {
    let count = hi + 1 - lo;
    if count < 5 {
        return Err(DiagnosticsError::TooFewSamples { needed: 5, got: count });
    }
    let stride = count.div_ceil(200).max(1);
    let mut idx: Vec<usize> = (lo..=hi).step_by(stride).collect();
    while idx.len() > 5 && crate::manifold::uniform_step(&idx.iter().map(|&i| traj.times[i]).collect::<Vec<_>>()).is_err() {
        idx.pop();
    }
    let k = idx.len();
    let m = traj.manifold();
    let points = if m == ManifoldId::So3 { Vec::new() } else { idx.iter().map(|&i| traj.configuration(i)).collect() };
    let curve = Curve::new(m, idx.iter().map(|&i| traj.times[i]).collect(), points, idx.iter().map(|&i| traj.velocity(i)).collect())?;
    let acc: Vec<Vector> = idx.iter().map(|&i| traj.covariant_acceleration(i)).collect();
    let dim = acc[0].len();
    let rows = (k - 2) * dim;
    let mut mat = DMatrix::zeros(rows, k);
    for j in 0..k {
        let field: Vec<Vector> = (0..k).map(|i| if i == j { acc[i].clone() } else { Vector::zeros(dim) }).collect();
        let col = l_operator_fd(&curve, &field)?;
        for (r, v) in col.iter().enumerate() {
            for d in 0..dim {
                mat[(r * dim + d, j)] = v[d];
            }
        }
    }
    let gram = mat.transpose() * &mat;
    let eig = gram.symmetric_eigen();
    let jmin = eig.eigenvalues.imin();
    let mut phi: Vec<f64> = eig.eigenvectors.column(jmin).iter().copied().collect();
    if phi.iter().sum::<f64>() < 0.0 {
        phi.iter_mut().for_each(|p| *p = -*p);
    }
    let y: Vec<Vector> = (0..k).map(|i| &acc[i] * phi[i]).collect();
    let res = l_operator_fd(&curve, &y)?;
    let r = res.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let s = y.iter().map(|v| v.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    Ok((phi, r / s))
}

/// Times where `‖X‖` (or `‖W‖`) drops below `rel · max ‖X‖`, located on the
/// piecewise-linear interpolant of the vector field between samples, merged
/// with the integrator's own event times.
pub fn zero_times(traj: &Trajectory, rel: f64) -> Vec<f64> {
    let n = traj.len();
    let Some(_) = traj.field(0) else {
        return Vec::new();
    };
    let f: Vec<Vector> = (0..n).map(|i| traj.field(i).unwrap()).collect();
    let scale = f.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut out: Vec<f64> = traj.events.clone();
    if scale == 0.0 {
        return out;
    }
    for i in 0..n - 1 {
        let d = &f[i + 1] - &f[i];
        let dd = d.norm_squared();
        let s = if dd > 0.0 { (-f[i].dot(&d) / dd).clamp(0.0, 1.0) } else { 0.0 };
        let p = &f[i] + &d * s;
        if p.norm() <= rel * scale {
            out.push(traj.times[i] + s * (traj.times[i + 1] - traj.times[i]));
        }
    }
    out.sort_by(f64::total_cmp);
    let h = (traj.end_time() - traj.start_time()) / (n - 1) as f64;
    let mut merged: Vec<f64> = Vec::new();
    for t in out {
        match merged.last() {
            Some(&last) if t - last <= 2.0 * h => {}
            _ => merged.push(t),
        }
    }
    merged
}

fn fd_acceleration_error(traj: &Trajectory) -> Result<f64, DiagnosticsError> {
    let curve = traj.curve()?;
    let vel: Vec<Vector> = (0..traj.len()).map(|i| traj.velocity(i)).collect();
    let fd = crate::manifold::covariant_derivatives(&curve, &vel)?;
    Ok(fd.iter().enumerate().map(|(i, a)| (a - traj.covariant_acceleration(i)).norm()).fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompareMetric {
    /// Distance between the configurations at the common end time.
    Endpoint,
    /// Largest distance between configurations over the first trajectory's
    /// samples inside the common span.
    PointwiseMax,
}

/// Discrepancy between the configurations (`x`, or `V` for `SO(3)`) of two
/// trajectories, aligning grids through dense output or interpolation.
pub fn compare(a: &Trajectory, b: &Trajectory, metric: CompareMetric) -> Result<f64, DiagnosticsError> {
    let n = a.manifold().ambient_dim();
    if b.manifold().ambient_dim() != n {
        return Err(DiagnosticsError::Incompatible);
    }
    let lo = a.start_time().max(b.start_time());
    let hi = a.end_time().min(b.end_time());
    if lo > hi {
        return Err(DiagnosticsError::DisjointSpans);
    }
    let conf = |y: &Vector| y.rows(0, n).into_owned();
    match metric {
        CompareMetric::Endpoint => Ok((conf(&a.state_at(hi)) - conf(&b.state_at(hi))).norm()),
        CompareMetric::PointwiseMax => {
            let tol = 1e-12 * hi.abs().max(1.0);
            Ok(a.times
                .iter()
                .zip(&a.states)
                .filter(|(t, _)| **t >= lo - tol && **t <= hi + tol)
                .map(|(t, y)| (conf(y) - conf(&b.state_at(*t))).norm())
                .fold(0.0, f64::max))
        }
    }
}

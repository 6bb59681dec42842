//! Ambient-coordinate geometry for the supported manifolds.
//!
//! Points and tangent vectors are plain coordinate vectors: `Eᵐ` uses `m`
//! components, `Sᵐ` uses its embedding in `Eᵐ⁺¹`, and `SO(3)` fields are
//! left-reduced into the Lie algebra, identified with `E³` through the
//! isometry `ad: E³ → so(3)` so that the bracket is the cross product.
//! In all three cases the Riemannian inner product is the Euclidean dot
//! product of coordinates.

use nalgebra::{DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Coordinate vector in the ambient space of a manifold.
pub type Vector = DVector<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("grid too short: need at least {needed} samples, got {got}")]
    GridTooShort { needed: usize, got: usize },
    #[error("grid is not strictly increasing at index {0}")]
    NonIncreasingGrid(usize),
    #[error("grid is not uniform (relative spacing deviation {0:e})")]
    NonUniformGrid(f64),
    #[error("field has {got} samples but the curve has {expected}")]
    MisalignedField { expected: usize, got: usize },
    #[error("matrix is not a rotation: orthogonality error {orthogonality:e}, det {det}")]
    NotARotation { orthogonality: f64, det: f64 },
    #[error("invalid manifold: {0}")]
    InvalidManifold(String),
}

/// Which geometry is in force.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ManifoldId {
    Euclidean { dim: usize },
    Sphere { dim: usize },
    So3,
}

impl ManifoldId {
    pub fn euclidean(dim: usize) -> Self {
        ManifoldId::Euclidean { dim }
    }

    pub fn sphere(dim: usize) -> Self {
        ManifoldId::Sphere { dim }
    }

    /// Intrinsic dimension `m`.
    pub fn dim(&self) -> usize {
        match *self {
            ManifoldId::Euclidean { dim } | ManifoldId::Sphere { dim } => dim,
            ManifoldId::So3 => 3,
        }
    }

    /// Number of coordinates used for points and tangent vectors.
    pub fn ambient_dim(&self) -> usize {
        match *self {
            ManifoldId::Euclidean { dim } => dim,
            ManifoldId::Sphere { dim } => dim + 1,
            ManifoldId::So3 => 3,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        match *self {
            ManifoldId::Euclidean { dim: 0 } => {
                Err(GeometryError::InvalidManifold("Euclidean dimension must be positive".into()))
            }
            ManifoldId::Sphere { dim: 0 } => {
                Err(GeometryError::InvalidManifold("sphere dimension must be at least 1".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> String {
        match *self {
            ManifoldId::Euclidean { dim } => format!("E{dim}"),
            ManifoldId::Sphere { dim } => format!("S{dim}"),
            ManifoldId::So3 => "SO3".to_string(),
        }
    }

    fn check(&self, v: &Vector) -> Result<(), GeometryError> {
        check_dim(self.ambient_dim(), v)
    }
}

fn check_dim(expected: usize, v: &Vector) -> Result<(), GeometryError> {
    if v.len() == expected {
        Ok(())
    } else {
        Err(GeometryError::DimensionMismatch { expected, got: v.len() })
    }
}

/// Riemannian inner product of `a` and `b` at `base`.
///
/// `base` is ignored for `SO(3)`, whose vectors live in the Lie algebra.
pub fn inner(manifold: ManifoldId, base: &Vector, a: &Vector, b: &Vector) -> Result<f64, GeometryError> {
    if manifold != ManifoldId::So3 {
        manifold.check(base)?;
    }
    manifold.check(a)?;
    manifold.check(b)?;
    Ok(a.dot(b))
}

/// `R(X,Y)Z = ⟨Y,Z⟩X − ⟨X,Z⟩Y` on a unit sphere.
pub fn sphere_curvature_action(x: &Vector, y: &Vector, z: &Vector) -> Result<Vector, GeometryError> {
    check_dim(x.len(), y)?;
    check_dim(x.len(), z)?;
    Ok(x * y.dot(z) - y * x.dot(z))
}

/// Curvature action `R(X,Y)Z` for any supported manifold.
///
/// For `SO(3)` with the bi-invariant metric this is `−¼[[X,Y],Z]`.
pub fn curvature_action(
    manifold: ManifoldId,
    x: &Vector,
    y: &Vector,
    z: &Vector,
) -> Result<Vector, GeometryError> {
    manifold.check(x)?;
    manifold.check(y)?;
    manifold.check(z)?;
    Ok(curvature_unchecked(manifold, x, y, z))
}

fn curvature_unchecked(manifold: ManifoldId, x: &Vector, y: &Vector, z: &Vector) -> Vector {
    match manifold {
        ManifoldId::Euclidean { .. } => Vector::zeros(x.len()),
        ManifoldId::Sphere { .. } => x * y.dot(z) - y * x.dot(z),
        ManifoldId::So3 => {
            let xy = cross(x, y);
            cross(&xy, z) * -0.25
        }
    }
}

/// Removes the normal component of `v` at `base` (identity off the sphere).
pub fn project_tangent(manifold: ManifoldId, base: &Vector, v: &Vector) -> Vector {
    match manifold {
        ManifoldId::Sphere { .. } => v - base * v.dot(base),
        _ => v.clone(),
    }
}

/// Cross product of two 3-vectors stored as dynamic vectors.
pub fn cross(a: &Vector, b: &Vector) -> Vector {
    Vector::from_column_slice(&[
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])
}

/// Levi-Civita correction added to the plain time derivative of a field `f`
/// along a curve passing through `point` with velocity `velocity`.
fn connection_term(manifold: ManifoldId, point: &Vector, velocity: &Vector, f: &Vector) -> Vector {
    match manifold {
        ManifoldId::Euclidean { .. } => Vector::zeros(f.len()),
        ManifoldId::Sphere { .. } => point * velocity.dot(f),
        ManifoldId::So3 => cross(velocity, f) * 0.5,
    }
}

/// A curve sampled on a time grid.
///
/// For `SO(3)` only the left-reduced velocities `V` are needed; `points`
/// may be empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub manifold: ManifoldId,
    pub times: Vec<f64>,
    pub points: Vec<Vector>,
    pub velocities: Vec<Vector>,
}

impl Curve {
    pub fn new(
        manifold: ManifoldId,
        times: Vec<f64>,
        points: Vec<Vector>,
        velocities: Vec<Vector>,
    ) -> Result<Self, GeometryError> {
        let n = times.len();
        if let Some(i) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(GeometryError::NonIncreasingGrid(i + 1));
        }
        if velocities.len() != n {
            return Err(GeometryError::MisalignedField { expected: n, got: velocities.len() });
        }
        let needs_points = manifold != ManifoldId::So3;
        if needs_points && points.len() != n {
            return Err(GeometryError::MisalignedField { expected: n, got: points.len() });
        }
        let dim = manifold.ambient_dim();
        for v in velocities.iter().chain(points.iter()) {
            check_dim(dim, v)?;
        }
        Ok(Self { manifold, times, points, velocities })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn point(&self, i: usize) -> Vector {
        self.points.get(i).cloned().unwrap_or_else(|| Vector::zeros(self.manifold.ambient_dim()))
    }

    fn check_field(&self, field: &[Vector], min_len: usize) -> Result<(), GeometryError> {
        if self.len() < min_len {
            return Err(GeometryError::GridTooShort { needed: min_len, got: self.len() });
        }
        if field.len() != self.len() {
            return Err(GeometryError::MisalignedField { expected: self.len(), got: field.len() });
        }
        let dim = self.manifold.ambient_dim();
        field.iter().try_for_each(|f| check_dim(dim, f))
    }

    /// Uniform step of the grid, or an error when the grid is not uniform.
    pub fn uniform_step(&self) -> Result<f64, GeometryError> {
        uniform_step(&self.times)
    }
}

pub(crate) fn uniform_step(times: &[f64]) -> Result<f64, GeometryError> {
    let n = times.len();
    if n < 2 {
        return Err(GeometryError::GridTooShort { needed: 2, got: n });
    }
    let h = (times[n - 1] - times[0]) / (n - 1) as f64;
    let worst = times
        .windows(2)
        .map(|w| ((w[1] - w[0]) - h).abs() / h)
        .fold(0.0, f64::max);
    if worst > 1e-6 {
        return Err(GeometryError::NonUniformGrid(worst));
    }
    Ok(h)
}

/// Plain time derivative of sampled values at `i`: three-point central
/// stencil inside, second-order one-sided stencils at both ends. Works on
/// non-uniform grids.
fn time_derivative(times: &[f64], f: &[Vector], i: usize) -> Vector {
    let n = times.len();
    let (a, b, c, ia, ib, ic) = if i == 0 {
        (0, 1, 2, 0, 1, 2)
    } else if i == n - 1 {
        (n - 3, n - 2, n - 1, n - 3, n - 2, n - 1)
    } else {
        (i - 1, i, i + 1, i - 1, i, i + 1)
    };
    // Derivative of the quadratic Lagrange interpolant through a, b, c at t_i.
    let (ta, tb, tc, t) = (times[a], times[b], times[c], times[i]);
    let wa = ((t - tb) + (t - tc)) / ((ta - tb) * (ta - tc));
    let wb = ((t - ta) + (t - tc)) / ((tb - ta) * (tb - tc));
    let wc = ((t - ta) + (t - tb)) / ((tc - ta) * (tc - tb));
    &f[ia] * wa + &f[ib] * wb + &f[ic] * wc
}

/// Numerical covariant derivative `∇ₜZ` of a sampled field at grid index
/// `index`: finite-difference time derivative plus the manifold's
/// connection term (sphere `⟨ẋ,Z⟩x`, `SO(3)` `½[V,Z]`, none for `Eᵐ`).
pub fn covariant_derivative_fd(curve: &Curve, field: &[Vector], index: usize) -> Result<Vector, GeometryError> {
    curve.check_field(field, 3)?;
    if index >= curve.len() {
        return Err(GeometryError::MisalignedField { expected: curve.len(), got: index + 1 });
    }
    Ok(covariant_at(curve, field, index))
}

fn covariant_at(curve: &Curve, field: &[Vector], i: usize) -> Vector {
    let d = time_derivative(&curve.times, field, i);
    d + connection_term(curve.manifold, &curve.point(i), &curve.velocities[i], &field[i])
}

/// `∇ₜZ` at every grid point.
pub fn covariant_derivatives(curve: &Curve, field: &[Vector]) -> Result<Vec<Vector>, GeometryError> {
    curve.check_field(field, 3)?;
    Ok((0..curve.len()).map(|i| covariant_at(curve, field, i)).collect())
}

/// Vector values of `L(Z) = ∇ₜ²Z + R(Z, ẋ)ẋ` at interior grid points
/// `1..n-1`, by nested finite differences on the staggered half-grid:
/// `∇ₜZ` is formed at midpoints and differenced again back onto the grid.
pub fn l_operator_fd(curve: &Curve, field: &[Vector]) -> Result<Vec<Vector>, GeometryError> {
    curve.check_field(field, 5)?;
    let h = curve.uniform_step()?;
    let m = curve.manifold;
    let n = curve.len();
    let half: Vec<Vector> = (0..n - 1)
        .map(|i| {
            let p = (curve.point(i) + curve.point(i + 1)) * 0.5;
            let v = (&curve.velocities[i] + &curve.velocities[i + 1]) * 0.5;
            let f = (&field[i] + &field[i + 1]) * 0.5;
            (&field[i + 1] - &field[i]) / h + connection_term(m, &p, &v, &f)
        })
        .collect();
    Ok((1..n - 1)
        .map(|i| {
            let p = curve.point(i);
            let v = &curve.velocities[i];
            let mean = (&half[i] + &half[i - 1]) * 0.5;
            let second = (&half[i] - &half[i - 1]) / h + connection_term(m, &p, v, &mean);
            second + curvature_unchecked(m, &field[i], v, v)
        })
        .collect())
}

/// Riemannian norms of `L(Z)` at interior grid points (see [`l_operator_fd`]).
/// Exact solutions of `L(Z) = 0` give residuals that shrink as `O(h²)`.
pub fn l_residual(curve: &Curve, field: &[Vector]) -> Result<Vec<f64>, GeometryError> {
    Ok(l_operator_fd(curve, field)?.iter().map(|v| v.norm()).collect())
}

/// Fourth-order estimate of `L(Z)` by Richardson extrapolation of
/// [`l_operator_fd`] on the grid and on its two interleaved subgrids of
/// double step. Values are returned at grid points `2..n-2`; at least 10
/// samples are required.
pub fn l_operator_extrapolated(curve: &Curve, field: &[Vector]) -> Result<Vec<Vector>, GeometryError> {
    curve.check_field(field, 10)?;
    let fine = l_operator_fd(curve, field)?;
    let n = curve.len();
    let mut coarse: Vec<Option<Vector>> = vec![None; n];
    for offset in 0..2 {
        let idx: Vec<usize> = (offset..n).step_by(2).collect();
        let sub = Curve {
            manifold: curve.manifold,
            times: idx.iter().map(|&i| curve.times[i]).collect(),
            points: if curve.points.is_empty() { Vec::new() } else { idx.iter().map(|&i| curve.points[i].clone()).collect() },
            velocities: idx.iter().map(|&i| curve.velocities[i].clone()).collect(),
        };
        let sub_field: Vec<Vector> = idx.iter().map(|&i| field[i].clone()).collect();
        for (k, v) in l_operator_fd(&sub, &sub_field)?.into_iter().enumerate() {
            coarse[idx[k + 1]] = Some(v);
        }
    }
    Ok((2..n - 2)
        .map(|i| {
            let c = coarse[i].as_ref().expect("interior point of a subgrid");
            (&fine[i - 1] * 4.0 - c) / 3.0
        })
        .collect())
}

/// Skew-symmetric matrix of `v`, so that `hat(v)·w = v × w`.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`] applied to the skew part of `m`.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]) * 0.5
}

/// A point of `SO(3)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub const TOLERANCE: f64 = 1e-9;

    /// Checked constructor: `‖RᵀR − I‖ ≤ 1e-9` and `|det R − 1| ≤ 1e-9`.
    pub fn new(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        let r = Rotation(m);
        let orthogonality = r.orthogonality_error();
        let det = m.determinant();
        if orthogonality > Self::TOLERANCE || (det - 1.0).abs() > Self::TOLERANCE {
            return Err(GeometryError::NotARotation { orthogonality, det });
        }
        Ok(r)
    }

    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// `exp(hat(ω))` by the Rodrigues formula.
    pub fn exp(omega: &Vector3<f64>) -> Self {
        let theta = omega.norm();
        let k = hat(omega);
        let (a, b) = if theta < 1e-8 {
            (1.0 - theta * theta / 6.0, 0.5 - theta * theta / 24.0)
        } else {
            (theta.sin() / theta, (1.0 - theta.cos()) / (theta * theta))
        };
        Rotation(Matrix3::identity() + k * a + k * k * b)
    }

    /// Nearest rotation in the Frobenius norm (polar factor).
    pub fn nearest(m: &Matrix3<f64>) -> Self {
        let svd = m.svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut r = u * vt;
        if r.determinant() < 0.0 {
            let mut u2 = u;
            u2.column_mut(2).neg_mut();
            r = u2 * vt;
        }
        Rotation(r)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Frobenius norm of `RᵀR − I`.
    pub fn orthogonality_error(&self) -> f64 {
        (self.0.transpose() * self.0 - Matrix3::identity()).norm()
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }

    pub fn compose(&self, other: &Rotation) -> Rotation {
        Rotation(self.0 * other.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn v(c: &[f64]) -> Vector {
        Vector::from_column_slice(c)
    }

    #[test]
    fn inner_examples() {
        let s2 = ManifoldId::sphere(2);
        assert_eq!(inner(s2, &v(&[1., 0., 0.]), &v(&[0., 1., 0.]), &v(&[0., 1., 0.])).unwrap(), 1.0);
        let e2 = ManifoldId::euclidean(2);
        assert_eq!(inner(e2, &v(&[0., 0.]), &v(&[1., 2.]), &v(&[3., -1.])).unwrap(), 1.0);
        let a = v(&[1., 2., 3.]);
        assert_eq!(inner(ManifoldId::So3, &Vector::zeros(0), &a, &a).unwrap(), 14.0);
        assert!(matches!(
            inner(e2, &v(&[0., 0.]), &v(&[1., 2., 3.]), &v(&[1., 2.])),
            Err(GeometryError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn sphere_curvature_examples() {
        let (e1, e2) = (v(&[0., 1., 0.]), v(&[0., 0., 1.]));
        assert_eq!(sphere_curvature_action(&e1, &e2, &e2).unwrap(), v(&[0., 1., 0.]));
        assert_eq!(sphere_curvature_action(&e1, &e2, &e1).unwrap(), v(&[0., 0., -1.]));
        let x = v(&[0.3, -0.2, 0.7]);
        assert_eq!(sphere_curvature_action(&x, &x, &e1).unwrap(), Vector::zeros(3));
        assert!(sphere_curvature_action(&x, &v(&[1., 2.]), &e1).is_err());
    }

    #[test]
    fn project_tangent_examples() {
        let s2 = ManifoldId::sphere(2);
        assert_eq!(project_tangent(s2, &v(&[1., 0., 0.]), &v(&[1., 1., 0.])), v(&[0., 1., 0.]));
        assert_eq!(project_tangent(s2, &v(&[0., 0., 1.]), &v(&[0., 0., 5.])), v(&[0., 0., 0.]));
        let e3 = ManifoldId::euclidean(3);
        assert_eq!(project_tangent(e3, &v(&[9., 9., 9.]), &v(&[1., 2., 3.])), v(&[1., 2., 3.]));
    }

    fn great_circle(n: usize, h: f64) -> Curve {
        let times: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        let points = times.iter().map(|t| v(&[t.cos(), t.sin(), 0.])).collect();
        let vels = times.iter().map(|t| v(&[-t.sin(), t.cos(), 0.])).collect();
        Curve::new(ManifoldId::sphere(2), times, points, vels).unwrap()
    }

    #[test]
    fn covariant_derivative_examples() {
        let e2 = ManifoldId::euclidean(2);
        let times: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).collect();
        let pts: Vec<Vector> = times.iter().map(|t| v(&[*t, 0.])).collect();
        let c = Curve::new(e2, times, pts.clone(), vec![v(&[1., 0.]); 10]).unwrap();
        let constant = vec![v(&[2., -1.]); 10];
        for i in 0..10 {
            assert_abs_diff_eq!(covariant_derivative_fd(&c, &constant, i).unwrap().norm(), 0.0, epsilon = 1e-12);
        }

        let gc = great_circle(200, 1e-2);
        for i in [0, 1, 100, 199] {
            let acc = covariant_derivative_fd(&gc, &gc.velocities, i).unwrap();
            assert!(acc.norm() < 1e-4, "index {i}: {}", acc.norm());
            let normal = vec![v(&[0., 0., 1.]); gc.len()];
            assert_abs_diff_eq!(covariant_derivative_fd(&gc, &normal, i).unwrap().norm(), 0.0, epsilon = 1e-12);
        }

        let short = Curve::new(e2, vec![0., 1.], pts[..2].to_vec(), vec![v(&[1., 0.]); 2]).unwrap();
        assert!(matches!(
            covariant_derivative_fd(&short, &constant[..2], 0),
            Err(GeometryError::GridTooShort { .. })
        ));
    }

    #[test]
    fn l_residual_affine_and_zero_fields() {
        let e2 = ManifoldId::euclidean(2);
        for n in [41usize, 81] {
            let h = 1.0 / (n - 1) as f64;
            let times: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
            let pts = times.iter().map(|t| v(&[*t, 2. * t])).collect();
            let c = Curve::new(e2, times.clone(), pts, vec![v(&[1., 2.]); n]).unwrap();
            let field: Vec<Vector> = times.iter().map(|t| v(&[1. + 3. * t, -2. + t])).collect();
            let r = l_residual(&c, &field).unwrap();
            assert_eq!(r.len(), n - 2);
            let m = r.iter().cloned().fold(0.0, f64::max);
            assert!(m < 1e-9, "{m}");
            let zero = vec![Vector::zeros(2); n];
            assert!(l_residual(&c, &zero).unwrap().iter().all(|x| *x == 0.0));
        }
    }

    #[test]
    fn l_residual_converges_second_order_on_sphere() {
        // Jacobi field along a unit-speed great circle: J(t) = sin(t)·e₃ solves L(J) = 0.
        let errs: Vec<f64> = [0.02, 0.01, 0.005]
            .iter()
            .map(|&h| {
                let gc = great_circle((2.0 / h) as usize + 1, h);
                let field: Vec<Vector> = gc.times.iter().map(|t| v(&[0., 0., t.sin()])).collect();
                l_residual(&gc, &field).unwrap().into_iter().fold(0.0, f64::max)
            })
            .collect();
        assert!(errs[0] > 0.0);
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 1.9, "order {order} from {errs:?}");
        }
    }

    #[test]
    fn extrapolated_l_operator_is_fourth_order() {
        let errs: Vec<f64> = [0.04, 0.02, 0.01]
            .iter()
            .map(|&h| {
                let gc = great_circle((2.0 / h) as usize + 1, h);
                let field: Vec<Vector> = gc.times.iter().map(|t| v(&[0., 0., t.sin() + 2.0 * t.cos()])).collect();
                let vals = l_operator_extrapolated(&gc, &field).unwrap();
                assert_eq!(vals.len(), gc.len() - 4);
                vals.iter().map(|x| x.norm()).fold(0.0, f64::max)
            })
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 3.7, "order {order} from {errs:?}");
        }
    }

    #[test]
    fn rotation_checks() {
        let r = Rotation::exp(&Vector3::new(0.3, -1.2, 0.5));
        assert!(r.orthogonality_error() < 1e-14);
        assert!(Rotation::new(*r.matrix()).is_ok());
        assert!(Rotation::new(Matrix3::identity() * 1.1).is_err());
        assert!(Rotation::new(-Matrix3::identity()).is_err());
        let w = Vector3::new(0.1, 0.2, 0.3);
        assert_abs_diff_eq!(vee(&hat(&w)), w, epsilon = 1e-15);
        let noisy = r.matrix() + Matrix3::repeat(1e-6);
        let fixed = Rotation::nearest(&noisy);
        assert!(fixed.orthogonality_error() < 1e-14);
        assert!((fixed.matrix() - r.matrix()).norm() < 1e-5);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn vec3() -> impl Strategy<Value = Vector> {
            prop::array::uniform3(-10.0f64..10.0).prop_map(|a| Vector::from_column_slice(&a))
        }

        proptest! {
            #[test]
            fn inner_symmetric_positive(a in vec3(), b in vec3()) {
                let base = Vector::zeros(3);
                let m = ManifoldId::euclidean(3);
                prop_assert_eq!(inner(m, &base, &a, &b).unwrap(), inner(m, &base, &b, &a).unwrap());
                if a.norm() > 0.0 {
                    prop_assert!(inner(m, &base, &a, &a).unwrap() > 0.0);
                }
            }

            #[test]
            fn sphere_curvature_symmetries(x in vec3(), y in vec3(), z in vec3(), w in vec3()) {
                let rxy = sphere_curvature_action(&x, &y, &z).unwrap();
                let ryx = sphere_curvature_action(&y, &x, &z).unwrap();
                prop_assert!((&rxy + &ryx).norm() <= 1e-12 * (1.0 + rxy.norm()));
                let lhs = rxy.dot(&w);
                let rhs = sphere_curvature_action(&w, &z, &y).unwrap().dot(&x);
                prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
            }

            #[test]
            fn projection_idempotent_and_tangent(p in vec3(), u in vec3()) {
                prop_assume!(p.norm() > 1e-3);
                let base = p.normalize();
                let m = ManifoldId::sphere(2);
                let once = project_tangent(m, &base, &u);
                let twice = project_tangent(m, &base, &once);
                prop_assert!(once.dot(&base).abs() <= 1e-14 * (1.0 + u.norm()));
                prop_assert!((&once - &twice).norm() <= 1e-14 * (1.0 + u.norm()));
            }
        }
    }
}

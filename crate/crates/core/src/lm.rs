//! Levenberg–Marquardt on a product of a unit sphere (a scale-free
//! direction) and a few free scalars, with forward-difference Jacobians.

use crate::manifold::Vector;
use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Params {
    /// Unit vector.
    pub dir: Vector,
    pub scalars: Vector,
}

impl Params {
    pub fn new(dir: Vector, scalars: Vector) -> Self {
        let n = dir.norm();
        Params { dir: if n > 0.0 { dir / n } else { dir }, scalars }
    }

    fn dof(&self) -> usize {
        self.dir.len().saturating_sub(1) + self.scalars.len()
    }

    /// Moves along `delta` (tangent coordinates then scalars) and retracts
    /// back onto the sphere.
    fn step(&self, basis: &DMatrix<f64>, delta: &Vector) -> Params {
        let k = basis.ncols();
        let dir = &self.dir + basis * delta.rows(0, k);
        let scalars = &self.scalars + delta.rows(k, self.scalars.len());
        Params::new(dir, scalars)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LmOptions {
    pub max_iterations: usize,
    /// Converged once the residual norm drops to this value.
    pub tolerance: f64,
    pub fd_step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LmResult {
    pub params: Params,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Orthonormal basis of the tangent space `ξ^⊥`, as columns.
pub(crate) fn tangent_basis(xi: &Vector) -> DMatrix<f64> {
    let k = xi.len();
    let skip = xi.iamax();
    let mut cols: Vec<Vector> = Vec::with_capacity(k.saturating_sub(1));
    for j in (0..k).filter(|&j| j != skip) {
        let mut e = Vector::zeros(k);
        e[j] = 1.0;
        e -= xi * xi[j];
        for c in &cols {
            let p = c.dot(&e);
            e -= c * p;
        }
        cols.push(e.normalize());
    }
    if cols.is_empty() {
        return DMatrix::zeros(k, 0);
    }
    DMatrix::from_columns(&cols)
}

/// Minimizes `‖f(p)‖`. `canon` may rewrite an accepted iterate into an
/// equivalent canonical form (e.g. flipping the sign of a negative scale).
pub(crate) fn minimize<F, C>(f: F, canon: C, start: Params, opts: &LmOptions) -> LmResult
where
    F: Fn(&Params) -> Vector,
    C: Fn(&mut Params),
{
    let mut p = start;
    canon(&mut p);
    let mut r = f(&p);
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut it = 0;
    let done = |c: f64| c.sqrt() <= opts.tolerance;
    while it < opts.max_iterations && !done(cost) && cost.is_finite() {
        it += 1;
        let basis = tangent_basis(&p.dir);
        let k = basis.ncols();
        let n = p.dof();
        let mut jac = DMatrix::zeros(r.len(), n);
        for j in 0..n {
            let mut d = Vector::zeros(n);
            let h = if j < k { opts.fd_step } else { opts.fd_step * p.scalars[j - k].abs().max(1.0) };
            d[j] = h;
            let rj = f(&p.step(&basis, &d));
            jac.set_column(j, &((rj - &r) / h));
        }
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let mut improved = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * (jtj[(i, i)] + 1e-12);
            }
            let Some(delta) = a.cholesky().map(|c| -c.solve(&g)) else {
                lambda *= 4.0;
                continue;
            };
            let mut trial = p.step(&basis, &delta);
            canon(&mut trial);
            let rt = f(&trial);
            let ct = rt.norm_squared();
            if ct.is_finite() && ct < cost {
                let small = delta.norm() < 1e-15 * (1.0 + p.scalars.norm());
                p = trial;
                r = rt;
                cost = ct;
                lambda = (lambda / 3.0).max(1e-12);
                improved = !small;
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
    }
    LmResult { converged: done(cost), residual: cost.sqrt(), iterations: it, params: p }
}

/// `index`-th point of the Halton sequence in `[0, 1)^dim`.
pub(crate) fn halton(index: usize, dim: usize) -> Vec<f64> {
    const PRIMES: [usize; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];
    (0..dim)
        .map(|d| {
            let base = PRIMES[d % PRIMES.len()];
            let (mut f, mut r, mut i) = (1.0, 0.0, index + 1);
            while i > 0 {
                f /= base as f64;
                r += f * (i % base) as f64;
                i /= base;
            }
            r
        })
        .collect()
}

//! Minimum L∞-acceleration curves on Riemannian manifolds.
//!
//! The crate covers three geometries, all handled in ambient coordinates:
//! Euclidean space `Eᵐ`, unit spheres `Sᵐ ⊂ Eᵐ⁺¹` and the rotation group
//! `SO(3)` with its bi-invariant metric (Lie algebra identified with `E³`).
//!
//! * [`manifold`]: inner products, curvature, covariant derivatives along
//!   sampled curves and the Jacobi-type operator `L(X) = ∇ₜ²X + R(X, ẋ)ẋ`.
//! * [`euclid`]: closed-form optimal curves in `Eᵐ`, a boundary-value fit,
//!   natural cubic splines and exact `J∞` evaluation.
//! * [`ode`]: extremal ODE systems, Riemannian cubics and an adaptive
//!   Dormand–Prince 5(4) integrator with dense output and zero-field events.
//! * [`lie`]: conserved quantities, group reconstruction and null-curve
//!   classification for `SO(3)`.
//! * [`bvp`]: shooting for two-point problems and the multi-point checker.
//! * [`diagnostics`]: drift, residual and `J∞` measurements with verdicts.
//! * [`config`] / [`run`]: serializable run configurations, presets and
//!   the command-line driver.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bvp;
pub mod config;
pub mod diagnostics;
pub mod euclid;
pub mod lie;
mod lm;
pub mod manifold;
pub mod ode;
pub mod output;
pub mod run;

pub use manifold::{ManifoldId, Rotation, Vector};
pub use ode::Trajectory;

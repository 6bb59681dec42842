use linf_accel::bvp::{residual, ShootingProblem, ShootingUnknowns, ShootingVariant};
use linf_accel::euclid::BoundaryData;
use linf_accel::{ManifoldId, Vector};
use proptest::prelude::*;

fn problem(variant: ShootingVariant) -> ShootingProblem {
    let r = 0.5f64.sqrt();
    let boundary = BoundaryData {
        x0: Vector::from_vec(vec![1.0, 0.0, 0.0]),
        x1: Vector::from_vec(vec![0.0, r, r]),
        v0: Vector::from_vec(vec![0.0, 1.0, 0.0]),
        v1: match variant {
            ShootingVariant::FullVelocities => Some(Vector::from_vec(vec![-1.0, 0.0, 0.0])),
            ShootingVariant::FreeEndVelocity => None,
        },
        t0: 0.0,
        t1: 1.5,
    };
    ShootingProblem::new(ManifoldId::sphere(2), variant, boundary)
}

/// Tangent data at `x0 = e₁`: first components are zero.
fn unknowns() -> impl Strategy<Value = (Vector, Vector, f64)> {
    (prop::array::uniform4(-1.0f64..1.0), 0.1f64..4.0)
        .prop_filter("field away from zero", |(p, _)| p[0].hypot(p[1]) > 0.2)
        .prop_map(|(p, z)| (Vector::from_vec(vec![0.0, p[0], p[1]]), Vector::from_vec(vec![0.0, p[2], p[3]]), z))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn residual_ignores_positive_field_scale((f, fr, z) in unknowns(), k in 0.01f64..100.0, free in any::<bool>()) {
        let p = problem(if free { ShootingVariant::FreeEndVelocity } else { ShootingVariant::FullVelocities });
        let base = residual(&p, &ShootingUnknowns::normalized(f.clone(), fr.clone(), z)).unwrap();
        let scaled = residual(&p, &ShootingUnknowns::normalized(&f * k, &fr * k, z)).unwrap();
        let tol = 1e-12 * (1.0 + base.vector.norm());
        prop_assert!((&scaled.vector - &base.vector).norm() <= tol, "{} vs {}", scaled.vector, base.vector);
        prop_assert_eq!(scaled.event_time.is_some(), base.event_time.is_some());
    }

    #[test]
    fn residual_is_bit_reproducible((f, fr, z) in unknowns()) {
        let p = problem(ShootingVariant::FullVelocities);
        let u = ShootingUnknowns::normalized(f, fr, z);
        prop_assert_eq!(residual(&p, &u).unwrap(), residual(&p, &u).unwrap());
    }
}

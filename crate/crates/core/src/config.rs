//! Run configurations (JSON, versioned) and the shipped presets.

use crate::bvp::ShootingVariant;
use crate::manifold::ManifoldId;
use crate::ode::ZeroCrossing;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;
const SPHERE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Ivp,
    Bvp,
    Check,
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemName {
    SphereExtremal,
    So3Reduced,
    RiemannianCubic,
    EuclidClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { rtol: 1e-10, atol: 1e-12 }
    }
}

fn default_schema() -> u32 {
    CONFIG_SCHEMA_VERSION
}

fn default_samples() -> usize {
    2048
}

/// One computation. Vectors are named numeric arrays in `initial` (IVP
/// data) and `boundary` (`x0`, `x1`, `v0`, `v1`).
///
/// Initial keys by system: `sphere_extremal` uses `x`, `xdot`, `field`,
/// `field_rate`; `so3_reduced` uses `v`, `w`; `riemannian_cubic` uses
/// `x`, `xdot`, `accel`, `jerk` (or `v`, `vdot`, `vddot` on `SO(3)`);
/// `euclid_closed_form` uses `a`, `b`, `c`, `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub mode: Mode,
    pub system: SystemName,
    pub manifold: ManifoldId,
    #[serde(default)]
    pub z: Option<f64>,
    #[serde(default)]
    pub c: Option<Vec<f64>>,
    #[serde(default)]
    pub initial: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub boundary: BTreeMap<String, Vec<f64>>,
    pub span: [f64; 2],
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputFormat,
    #[serde(default = "default_samples")]
    pub sample_count: usize,
    #[serde(default)]
    pub on_zero: ZeroCrossing,
    #[serde(default)]
    pub variant: ShootingVariant,
    #[serde(default)]
    pub restarts: Option<usize>,
    /// Segment boundaries for `check` and data times for `baseline`.
    #[serde(default)]
    pub knots: Vec<f64>,
    /// Data points for `baseline`.
    #[serde(default)]
    pub points: Vec<Vec<f64>>,
    /// Trajectory CSV to examine in `check` mode; when absent the
    /// trajectory is computed from `initial` as in `ivp` mode.
    #[serde(default)]
    pub trajectory_file: Option<String>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn vector(&self, map: &BTreeMap<String, Vec<f64>>, key: &str) -> Option<crate::Vector> {
        map.get(key).map(|v| crate::Vector::from_column_slice(v))
    }

    /// Every violation, in a stable order.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut errs = Vec::new();
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            errs.push(format!("unsupported schema_version {} (expected {CONFIG_SCHEMA_VERSION})", self.schema_version));
        }
        if let Err(e) = self.manifold.validate() {
            errs.push(e.to_string());
        }
        if !(self.span[0] < self.span[1]) || !self.span.iter().all(|t| t.is_finite()) {
            errs.push("span not increasing".to_string());
        }
        if self.sample_count < 2 {
            errs.push("sample_count must be at least 2".to_string());
        }
        if !(self.tolerances.rtol > 0.0 && self.tolerances.atol > 0.0) {
            errs.push("tolerances must be positive".to_string());
        }
        if let Some(z) = self.z {
            if !(z >= 0.0) || !z.is_finite() {
                errs.push("z must be a nonnegative number".to_string());
            }
        }
        if self.restarts == Some(0) {
            errs.push("restarts must be at least 1".to_string());
        }
        let n = self.manifold.ambient_dim();
        let manifold_ok = matches!(
            (self.system, self.manifold),
            (SystemName::SphereExtremal, ManifoldId::Sphere { .. })
                | (SystemName::So3Reduced, ManifoldId::So3)
                | (SystemName::RiemannianCubic, _)
                | (SystemName::EuclidClosedForm, ManifoldId::Euclidean { .. })
        );
        if !manifold_ok {
            errs.push(format!("system {:?} is not defined on {}", self.system, self.manifold.name()).to_lowercase());
        }
        let map_errs = |map: &BTreeMap<String, Vec<f64>>, keys: &[&str], optional: &[&str], what: &str, errs: &mut Vec<String>| {
            for k in keys {
                match map.get(*k) {
                    None => errs.push(format!("missing {what} vector {k}")),
                    Some(v) if v.len() != n => errs.push(format!("{what} vector {k} has {} components, expected {n}", v.len())),
                    Some(v) if v.iter().any(|x| !x.is_finite()) => errs.push(format!("{what} vector {k} is not finite")),
                    _ => {}
                }
            }
            for k in map.keys() {
                if !keys.contains(&k.as_str()) && !optional.contains(&k.as_str()) {
                    errs.push(format!("unknown {what} vector {k}"));
                }
            }
        };
        let needs_ivp = matches!(self.mode, Mode::Ivp) || (self.mode == Mode::Check && self.trajectory_file.is_none());
        if needs_ivp && manifold_ok {
            let keys: &[&str] = match (self.system, self.manifold) {
                (SystemName::SphereExtremal, _) => &["x", "xdot", "field", "field_rate"],
                (SystemName::So3Reduced, _) => &["v", "w"],
                (SystemName::RiemannianCubic, ManifoldId::So3) => &["v", "vdot", "vddot"],
                (SystemName::RiemannianCubic, _) => &["x", "xdot", "accel", "jerk"],
                (SystemName::EuclidClosedForm, _) => &["a", "b", "c", "d"],
            };
            map_errs(&self.initial, keys, &[], "initial", &mut errs);
            let needs_z = !matches!(self.system, SystemName::RiemannianCubic);
            if needs_z && self.z.is_none() {
                errs.push("missing z".to_string());
            }
            if self.system == SystemName::So3Reduced {
                match &self.c {
                    None => errs.push("missing c".to_string()),
                    Some(c) if c.len() != 3 => errs.push("c must have 3 components".to_string()),
                    _ => {}
                }
            }
            if let ManifoldId::Sphere { .. } = self.manifold {
                self.check_sphere_initial(&mut errs);
            }
        }
        if self.mode == Mode::Bvp {
            if !matches!(self.system, SystemName::SphereExtremal | SystemName::EuclidClosedForm) {
                errs.push("bvp mode needs system sphere_extremal or euclid_closed_form".to_string());
            } else if manifold_ok {
                let keys: &[&str] = match self.variant {
                    ShootingVariant::FullVelocities => &["x0", "x1", "v0", "v1"],
                    ShootingVariant::FreeEndVelocity => &["x0", "x1", "v0"],
                };
                map_errs(&self.boundary, keys, &[], "boundary", &mut errs);
                if self.system == SystemName::EuclidClosedForm && self.variant == ShootingVariant::FreeEndVelocity {
                    errs.push("the closed-form fit needs both velocities".to_string());
                }
                if let ManifoldId::Sphere { .. } = self.manifold {
                    for k in ["x0", "x1"] {
                        if let Some(x) = self.boundary.get(k).filter(|v| v.len() == n) {
                            if (norm(x) - 1.0).abs() > SPHERE_TOLERANCE {
                                errs.push(format!("{k} not on sphere (tolerance {SPHERE_TOLERANCE:e})"));
                            }
                        }
                    }
                }
            }
        }
        if self.mode == Mode::Check && self.knots.len() < 2 {
            errs.push("check mode needs at least 2 knots".to_string());
        }
        if self.mode == Mode::Baseline {
            if self.system != SystemName::EuclidClosedForm || !matches!(self.manifold, ManifoldId::Euclidean { .. }) {
                errs.push("baseline mode needs system euclid_closed_form on a Euclidean space".to_string());
            }
            if self.points.len() < 2 || self.points.len() != self.knots.len() {
                errs.push("baseline mode needs at least 2 points and one knot per point".to_string());
            }
            if self.points.iter().any(|p| p.len() != n) {
                errs.push(format!("every point must have {n} components"));
            }
        }
        if self.knots.windows(2).any(|w| !(w[1] > w[0])) {
            errs.push("knots not increasing".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }

    fn check_sphere_initial(&self, errs: &mut Vec<String>) {
        let n = self.manifold.ambient_dim();
        let get = |k: &str| self.initial.get(k).filter(|v| v.len() == n);
        let Some(x) = get("x") else { return };
        if (norm(x) - 1.0).abs() > SPHERE_TOLERANCE {
            errs.push(format!("x not on sphere (tolerance {SPHERE_TOLERANCE:e})"));
            return;
        }
        let tangent = |k: &str| get(k).map(|v| dot(x, v).abs() <= SPHERE_TOLERANCE * (1.0 + norm(v))).unwrap_or(true);
        for k in ["xdot", "field", "accel"] {
            if !tangent(k) {
                errs.push(format!("{k} not tangent to the sphere at x (tolerance {SPHERE_TOLERANCE:e})"));
            }
        }
        if let (Some(v), Some(f), Some(r)) = (get("xdot"), get("field"), get("field_rate")) {
            let g = dot(v, f) + dot(x, r);
            if g.abs() > SPHERE_TOLERANCE * (1.0 + norm(f) + norm(r)) {
                errs.push(format!("field_rate violates <xdot, field> + <x, field_rate> = 0 (tolerance {SPHERE_TOLERANCE:e})"));
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn vectors(pairs: &[(&str, &[f64])]) -> BTreeMap<String, Vec<f64>> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_vec())).collect()
}

fn base(name: &str, mode: Mode, system: SystemName, manifold: ManifoldId, span: [f64; 2]) -> RunConfig {
    RunConfig {
        schema_version: CONFIG_SCHEMA_VERSION,
        name: name.to_string(),
        mode,
        system,
        manifold,
        z: None,
        c: None,
        initial: BTreeMap::new(),
        boundary: BTreeMap::new(),
        span,
        tolerances: Tolerances::default(),
        output: OutputFormat::Csv,
        sample_count: default_samples(),
        on_zero: ZeroCrossing::Halt,
        variant: ShootingVariant::FullVelocities,
        restarts: None,
        knots: Vec::new(),
        points: Vec::new(),
        trajectory_file: None,
    }
}

fn so3(name: &str, c: [f64; 3], span: [f64; 2], samples: usize) -> RunConfig {
    RunConfig {
        z: Some(1.2),
        c: Some(c.to_vec()),
        initial: vectors(&[("v", &[1., 2., 3.]), ("w", &[-1., -4., 6.])]),
        sample_count: samples,
        ..base(name, Mode::Ivp, SystemName::So3Reduced, ManifoldId::So3, span)
    }
}

/// Names and one-line descriptions of the shipped presets.
pub const PRESETS: [(&str, &str); 6] = [
    ("sphere-example", "extremal on S2 over [0, 8], z = 1.2, X(0) = (0, 1, 200)"),
    ("so3-example-long", "reduced SO(3) extremal over [0, 700], C = -(2, 1, 0)"),
    ("so3-example-short", "reduced SO(3) extremal over [0, 5], C = (2, 1, 0)"),
    ("so3-null", "null reduced SO(3) extremal over [0, 10], C = 0"),
    ("euclid-bvp", "closed-form optimal curve in E2 from positions and velocities"),
    ("euclid-baseline", "natural cubic spline through three points in E2"),
];

pub fn preset(name: &str) -> Option<RunConfig> {
    let cfg = match name {
        "sphere-example" => RunConfig {
            z: Some(1.2),
            initial: vectors(&[
                ("x", &[1., 0., 0.]),
                ("xdot", &[0., 1., 0.]),
                ("field", &[0., 1., 200.]),
                ("field_rate", &[-1., 2., 1.]),
            ]),
            sample_count: 8001,
            ..base(name, Mode::Ivp, SystemName::SphereExtremal, ManifoldId::sphere(2), [0.0, 8.0])
        },
        "so3-example-long" => so3(name, [-2., -1., 0.], [0.0, 700.0], 70001),
        "so3-example-short" => so3(name, [2., 1., 0.], [0.0, 5.0], 5001),
        "so3-null" => so3(name, [0., 0., 0.], [0.0, 10.0], 10001),
        "euclid-bvp" => RunConfig {
            boundary: vectors(&[("x0", &[0., 0.]), ("x1", &[1., 0.5]), ("v0", &[0., 1.]), ("v1", &[1., 0.])]),
            sample_count: 1001,
            ..base(name, Mode::Bvp, SystemName::EuclidClosedForm, ManifoldId::euclidean(2), [0.0, 1.0])
        },
        "euclid-baseline" => RunConfig {
            knots: vec![0.0, 1.0, 2.0],
            points: vec![vec![0., 0.], vec![1., 1.], vec![2., 0.]],
            sample_count: 2001,
            ..base(name, Mode::Baseline, SystemName::EuclidClosedForm, ManifoldId::euclidean(2), [0.0, 2.0])
        },
        _ => return None,
    };
    Some(cfg)
}

//! Executes a [`RunConfig`] and writes its artifacts.

use crate::bvp::{self, BvpError, MultipointReport, ShootingProblem};
use crate::config::{Mode, OutputFormat, RunConfig, SystemName};
use crate::diagnostics::{self, DiagnosticsReport, Thresholds};
use crate::euclid::{self, BoundaryData, EuclidBranch, EuclidError, EuclidFitOptions};
use crate::lie::{self, NullReport, ReducedSolution};
use crate::manifold::ManifoldId;
use crate::ode::{self, CubicState, ExtremalState, IntegrateOptions, So3ReducedState, SystemKind, Termination, Trajectory};
use crate::output;
use nalgebra::Vector3;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;
pub const EXIT_VERDICT: i32 = 5;

#[derive(Debug, Clone, PartialEq)]
pub enum RunError {
    Validation(Vec<String>),
    Numerical(String),
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Validation(_) => EXIT_VALIDATION,
            RunError::Numerical(_) => EXIT_NUMERICAL,
            RunError::Io(_) => EXIT_IO,
        }
    }

    /// Machine-readable form printed on stdout.
    pub fn to_json(&self) -> String {
        let (kind, messages) = match self {
            RunError::Validation(m) => ("validation", m.clone()),
            RunError::Numerical(m) => ("numerical", vec![m.clone()]),
            RunError::Io(m) => ("io", vec![m.clone()]),
        };
        serde_json::json!({ "error": kind, "exit_code": self.exit_code(), "messages": messages }).to_string()
    }
}

impl From<ode::OdeError> for RunError {
    fn from(e: ode::OdeError) -> Self {
        match e {
            ode::OdeError::BadState { .. } | ode::OdeError::BadSpan(..) | ode::OdeError::UnsupportedManifold(_) => {
                RunError::Validation(vec![e.to_string()])
            }
            e => RunError::Numerical(e.to_string()),
        }
    }
}

impl From<diagnostics::DiagnosticsError> for RunError {
    fn from(e: diagnostics::DiagnosticsError) -> Self {
        RunError::Numerical(e.to_string())
    }
}

impl From<BvpError> for RunError {
    fn from(e: BvpError) -> Self {
        match e {
            BvpError::Ode(e) => e.into(),
            BvpError::Diagnostics(e) => e.into(),
            e => RunError::Validation(vec![e.to_string()]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShootingSummary {
    pub converged: bool,
    pub residual: f64,
    pub iterations: usize,
    pub seed_index: usize,
    pub z: f64,
    pub field0: Vec<f64>,
    pub field_rate0: Vec<f64>,
    pub event_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EuclidSummary {
    pub branch: serde_json::Value,
    pub residual: Option<f64>,
    pub candidates: Vec<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct So3Summary {
    pub c: f64,
    pub a: f64,
    pub null: NullReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineSummary {
    pub j_inf: f64,
    pub j2: f64,
}

/// Everything a run reports; serialized as `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub name: String,
    pub mode: Mode,
    pub system: SystemName,
    pub manifold: ManifoldId,
    pub exit_code: i32,
    pub status: String,
    pub termination: Option<Termination>,
    pub final_state: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DiagnosticsReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shooting: Option<ShootingSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub euclid: Option<EuclidSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub so3: Option<So3Summary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub multipoint: Option<MultipointReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub report: RunReport,
    pub trajectory: Trajectory,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        self.report.exit_code
    }
}

fn report(cfg: &RunConfig, traj: &Trajectory) -> RunReport {
    let final_state = traj.kind.component_names().into_iter().zip(traj.final_state().iter().copied()).collect();
    RunReport {
        schema_version: crate::diagnostics::SCHEMA_VERSION,
        name: cfg.name.clone(),
        mode: cfg.mode,
        system: cfg.system,
        manifold: cfg.manifold,
        exit_code: EXIT_OK,
        status: String::new(),
        termination: Some(traj.termination),
        final_state,
        diagnostics: None,
        shooting: None,
        euclid: None,
        so3: None,
        multipoint: None,
        baseline: None,
    }
}

fn finish(mut r: RunReport, code: i32, status: &str) -> RunReport {
    r.exit_code = code;
    r.status = status.to_string();
    r
}

fn vec3(v: &[f64]) -> Vector3<f64> {
    Vector3::new(v[0], v[1], v[2])
}

/// Runs the computation without touching the filesystem (except reading
/// `trajectory_file` in `check` mode).
pub fn execute(cfg: &RunConfig) -> Result<RunOutcome, RunError> {
    cfg.validate().map_err(RunError::Validation)?;
    match cfg.mode {
        Mode::Ivp => run_ivp(cfg),
        Mode::Bvp => run_bvp(cfg),
        Mode::Check => run_check(cfg),
        Mode::Baseline => run_baseline(cfg),
    }
}

/// Integrates (or evaluates, for the closed form) the configured initial
/// value problem.
pub fn integrate_config(cfg: &RunConfig) -> Result<Trajectory, RunError> {
    let span = (cfg.span[0], cfg.span[1]);
    let opts = IntegrateOptions {
        on_zero: cfg.on_zero,
        ..IntegrateOptions::with_tolerances(cfg.tolerances.rtol, cfg.tolerances.atol).samples(cfg.sample_count)
    };
    let get = |k: &str| cfg.vector(&cfg.initial, k).expect("validated");
    let z = cfg.z.unwrap_or(0.0);
    let (kind, y0) = match (cfg.system, cfg.manifold) {
        (SystemName::SphereExtremal, m) => {
            let s = ExtremalState { x: get("x"), xdot: get("xdot"), field: get("field"), field_rate: get("field_rate"), z };
            (SystemKind::Extremal { manifold: m }, s.pack())
        }
        (SystemName::So3Reduced, _) => {
            let c = cfg.c.as_ref().expect("validated");
            let s = So3ReducedState { v: vec3(&cfg.initial["v"]), w: vec3(&cfg.initial["w"]), z, c: vec3(c) };
            (SystemKind::So3Reduced, s.pack())
        }
        (SystemName::RiemannianCubic, ManifoldId::So3) => {
            let s = CubicState { position: crate::Vector::zeros(0), velocity: get("v"), acceleration: get("vdot"), jerk: get("vddot") };
            (SystemKind::RiemannianCubic { manifold: ManifoldId::So3 }, s.pack())
        }
        (SystemName::RiemannianCubic, m) => {
            let s = CubicState { position: get("x"), velocity: get("xdot"), acceleration: get("accel"), jerk: get("jerk") };
            (SystemKind::RiemannianCubic { manifold: m }, s.pack())
        }
        (SystemName::EuclidClosedForm, _) => {
            return closed_form_branch(cfg).trajectory(span, cfg.sample_count).map_err(euclid_error);
        }
    };
    Ok(ode::integrate(kind, &y0, span, &opts)?)
}

fn euclid_error(e: EuclidError) -> RunError {
    match e {
        EuclidError::NoConvergence { .. } => RunError::Numerical(e.to_string()),
        e => RunError::Validation(vec![e.to_string()]),
    }
}

fn run_ivp(cfg: &RunConfig) -> Result<RunOutcome, RunError> {
    let traj = integrate_config(cfg)?;
    let mut r = report(cfg, &traj);
    if traj.len() >= 5 {
        r.diagnostics = Some(diagnostics::analyze(&traj, &Thresholds::default())?);
    }
    if cfg.system == SystemName::So3Reduced {
        let s0 = So3ReducedState::unpack(&traj.states[0]);
        let (c, a) = lie::conserved(&s0);
        let reduced = ReducedSolution::new(traj.clone()).map_err(|e| RunError::Numerical(e.to_string()))?;
        let null = lie::classify_null(&reduced, 1e-12).map_err(|e| RunError::Numerical(e.to_string()))?;
        r.so3 = Some(So3Summary { c, a, null });
    }
    if cfg.system == SystemName::EuclidClosedForm {
        r.euclid = Some(EuclidSummary { branch: closed_form_branch(cfg).to_json(), residual: None, candidates: Vec::new() });
    }
    let event = matches!(traj.termination, Termination::FieldVanished { .. });
    let pass = r.diagnostics.as_ref().map(|d| d.all_pass).unwrap_or(true);
    let report = if event {
        finish(r, EXIT_NUMERICAL, "field vanished before the end of the span")
    } else if !pass {
        finish(r, EXIT_VERDICT, "verdict failed")
    } else {
        finish(r, EXIT_OK, "ok")
    };
    Ok(RunOutcome { report, trajectory: traj })
}

fn closed_form_branch(cfg: &RunConfig) -> EuclidBranch {
    let get = |k: &str| cfg.vector(&cfg.initial, k).expect("validated");
    EuclidBranch::Generic { z: cfg.z.unwrap_or(0.0), a: get("a"), b: get("b"), c: get("c"), d: get("d") }
}

fn boundary(cfg: &RunConfig) -> BoundaryData {
    let get = |k: &str| cfg.vector(&cfg.boundary, k);
    BoundaryData {
        x0: get("x0").expect("validated"),
        x1: get("x1").expect("validated"),
        v0: get("v0").expect("validated"),
        v1: match cfg.variant {
            bvp::ShootingVariant::FullVelocities => get("v1"),
            bvp::ShootingVariant::FreeEndVelocity => None,
        },
        t0: cfg.span[0],
        t1: cfg.span[1],
    }
}

fn run_bvp(cfg: &RunConfig) -> Result<RunOutcome, RunError> {
    let data = boundary(cfg);
    if cfg.system == SystemName::EuclidClosedForm {
        let fit = match euclid::solve_euclid_bvp(&data, &EuclidFitOptions::default()) {
            Ok(f) => f,
            Err(EuclidError::NoConvergence { best }) => {
                return Err(RunError::Numerical(format!("no branch fits the boundary data (best residual {best:e})")))
            }
            Err(e) => return Err(euclid_error(e)),
        };
        let traj = fit.branch.trajectory((data.t0, data.t1), cfg.sample_count).map_err(euclid_error)?;
        let mut r = report(cfg, &traj);
        r.diagnostics = Some(diagnostics::analyze(&traj, &Thresholds::default())?);
        r.euclid = Some(EuclidSummary {
            branch: fit.branch.to_json(),
            residual: Some(fit.residual),
            candidates: fit.candidates.iter().map(|c| serde_json::json!({ "branch": c.branch.to_json(), "residual": c.residual })).collect(),
        });
        return Ok(RunOutcome { report: finish(r, EXIT_OK, "converged"), trajectory: traj });
    }
    let mut problem = ShootingProblem::new(cfg.manifold, cfg.variant, data);
    problem.params.samples = cfg.sample_count.max(5);
    problem.params.rtol = problem.params.rtol.min(cfg.tolerances.rtol);
    problem.params.atol = problem.params.atol.min(cfg.tolerances.atol);
    if let Some(n) = cfg.restarts {
        problem.params.restarts = n;
    }
    let res = bvp::solve(&problem)?;
    let mut r = report(cfg, &res.solution);
    r.shooting = Some(ShootingSummary {
        converged: res.converged,
        residual: res.residual,
        iterations: res.iterations,
        seed_index: res.seed_index,
        z: res.unknowns.z,
        field0: res.unknowns.field0.iter().copied().collect(),
        field_rate0: res.unknowns.field_rate0.iter().copied().collect(),
        event_time: res.event_time,
    });
    r.diagnostics = Some(res.diagnostics);
    let report = if res.converged { finish(r, EXIT_OK, "converged") } else { finish(r, EXIT_NONCONVERGENCE, "no restart converged") };
    Ok(RunOutcome { report, trajectory: res.solution })
}

fn kind_of(cfg: &RunConfig) -> SystemKind {
    match cfg.system {
        SystemName::SphereExtremal => SystemKind::Extremal { manifold: cfg.manifold },
        SystemName::So3Reduced => SystemKind::So3Reduced,
        SystemName::RiemannianCubic => SystemKind::RiemannianCubic { manifold: cfg.manifold },
        SystemName::EuclidClosedForm => SystemKind::Extremal { manifold: cfg.manifold },
    }
}

fn run_check(cfg: &RunConfig) -> Result<RunOutcome, RunError> {
    let traj = match &cfg.trajectory_file {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| RunError::Io(format!("{path}: {e}")))?;
            let mut kind = kind_of(cfg);
            if text.starts_with("t,x0") && cfg.system == SystemName::EuclidClosedForm && !text.contains(",field0") {
                kind = SystemKind::Sampled { manifold: cfg.manifold };
            }
            output::from_csv(&text, kind).map_err(|e| RunError::Validation(vec![format!("{path}: {e}")]))?
        }
        None => integrate_config(cfg)?,
    };
    let mp = bvp::check_multipoint(&traj, &cfg.knots, &Thresholds::default())?;
    let mut r = report(cfg, &traj);
    r.diagnostics = diagnostics::analyze(&traj, &Thresholds::default()).ok();
    let pass = mp.any_segment_passes;
    r.multipoint = Some(mp);
    let report = if pass { finish(r, EXIT_OK, "some segment satisfies the conditions") } else { finish(r, EXIT_VERDICT, "no segment satisfies the conditions") };
    Ok(RunOutcome { report, trajectory: traj })
}

fn run_baseline(cfg: &RunConfig) -> Result<RunOutcome, RunError> {
    let points: Vec<crate::Vector> = cfg.points.iter().map(|p| crate::Vector::from_column_slice(p)).collect();
    let spline = euclid::natural_cubic_baseline(&cfg.knots, &points).map_err(euclid_error)?;
    let traj = spline.trajectory(cfg.sample_count.max(5));
    let mut r = report(cfg, &traj);
    r.diagnostics = Some(diagnostics::analyze(&traj, &Thresholds::default())?);
    r.multipoint = Some(bvp::check_multipoint(&traj, &cfg.knots, &Thresholds::default())?);
    r.baseline = Some(BaselineSummary { j_inf: spline.j_infinity(), j2: spline.j2() });
    Ok(RunOutcome { report: finish(r, EXIT_OK, "baseline computed"), trajectory: traj })
}

/// Paths written by [`write_artifacts`].
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub trajectory: PathBuf,
    pub report: PathBuf,
    pub config: PathBuf,
}

pub fn write_artifacts(cfg: &RunConfig, outcome: &RunOutcome, dir: &Path) -> Result<Artifacts, RunError> {
    let io = |e: std::io::Error| RunError::Io(format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    let trajectory = match cfg.output {
        OutputFormat::Csv => dir.join("trajectory.csv"),
        OutputFormat::Json => dir.join("trajectory.json"),
    };
    let body = match cfg.output {
        OutputFormat::Csv => output::to_csv(&outcome.trajectory),
        OutputFormat::Json => output::to_json(&outcome.trajectory),
    };
    fs::write(&trajectory, body).map_err(io)?;
    let report = dir.join("report.json");
    let mut text = serde_json::to_string_pretty(&outcome.report).expect("report serializes");
    text.push('\n');
    fs::write(&report, text).map_err(io)?;
    let config = dir.join("config.json");
    fs::write(&config, cfg.to_json() + "\n").map_err(io)?;
    Ok(Artifacts { trajectory, report, config })
}

/// Validates, runs and writes artifacts; returns the process exit code.
/// Errors are printed as JSON on stdout and leave no files behind.
pub fn run(cfg: &RunConfig, dir: &Path) -> i32 {
    let outcome = match execute(cfg) {
        Ok(o) => o,
        Err(e) => {
            println!("{}", e.to_json());
            return e.exit_code();
        }
    };
    match write_artifacts(cfg, &outcome, dir) {
        Ok(a) => {
            let summary = serde_json::json!({
                "status": outcome.report.status,
                "exit_code": outcome.exit_code(),
                "trajectory": a.trajectory.display().to_string(),
                "report": a.report.display().to_string(),
            });
            println!("{summary}");
            outcome.exit_code()
        }
        Err(e) => {
            println!("{}", e.to_json());
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::preset;

    #[test]
    fn so3_short_preset_reaches_reference_endpoint() {
        let out = execute(&preset("so3-example-short").unwrap()).unwrap();
        let f = &out.report.final_state;
        let want = [1.77133, 4.50895, 7.05963];
        for (k, w) in ["v0", "v1", "v2"].iter().zip(want) {
            assert!((f[*k] - w).abs() < 1e-4, "{k} {}", f[*k]);
        }
        assert_eq!(out.exit_code(), EXIT_OK, "{:#?}", out.report.diagnostics);
    }

    #[test]
    fn euclid_presets_run() {
        let out = execute(&preset("euclid-bvp").unwrap()).unwrap();
        assert_eq!(out.exit_code(), EXIT_OK);
        let out = execute(&preset("euclid-baseline").unwrap()).unwrap();
        assert_eq!(out.exit_code(), EXIT_OK);
        assert!(!out.report.diagnostics.unwrap().verdicts["z_constancy"].pass);
    }

    #[test]
    fn missing_z_is_a_validation_error() {
        let mut cfg = preset("sphere-example").unwrap();
        cfg.z = None;
        let e = execute(&cfg).unwrap_err();
        assert_eq!(e.exit_code(), EXIT_VALIDATION);
        assert!(e.to_json().contains("missing z"));
    }

    #[test]
    fn euclid_cubic_ivp_runs() {
        let mut cfg = preset("euclid-bvp").unwrap();
        cfg.mode = Mode::Ivp;
        cfg.system = SystemName::RiemannianCubic;
        cfg.initial = [("x", [0., 0.]), ("xdot", [1., 0.]), ("accel", [0., 1.]), ("jerk", [0., 0.])]
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_vec()))
            .collect();
        let out = execute(&cfg).unwrap();
        assert!((out.report.final_state["x1"] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn field_vanishing_is_a_numerical_event() {
        let mut cfg = preset("sphere-example").unwrap();
        cfg.span = [0.0, 3.0];
        cfg.sample_count = 301;
        cfg.z = Some(0.1);
        cfg.initial = [("x", [1., 0., 0.]), ("xdot", [0., 0., 0.]), ("field", [0., 1., 0.]), ("field_rate", [0., -1., 0.])]
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_vec()))
            .collect();
        let out = execute(&cfg).unwrap();
        assert_eq!(out.exit_code(), EXIT_NUMERICAL);
        assert!(matches!(out.report.termination, Some(Termination::FieldVanished { .. })));
    }
}

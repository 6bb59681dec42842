//! C ABI over `linf-accel`.
//!
//! Trajectories are returned as opaque handles owned by the caller and
//! released with [`linf_trajectory_free`]. Every fallible function returns a
//! [`LinfStatus`]; the message of the last failure on the calling thread is
//! available from [`linf_last_error`]. Strings returned by the library are
//! released with [`linf_string_free`].

use linf_accel::config::RunConfig;
use linf_accel::diagnostics::{self, Thresholds};
use linf_accel::ode::{self, ExtremalState, IntegrateOptions, So3ReducedState, SystemKind, Termination, Trajectory};
use linf_accel::{lie, run, ManifoldId, Vector};
use nalgebra::Vector3;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinfStatus {
    Ok = 0,
    NullPointer = 1,
    Validation = 2,
    NonConvergence = 3,
    /// The field vanished and integration halted early; the trajectory up to
    /// that time is still returned.
    NumericalEvent = 4,
    Internal = 5,
}

/// Integration settings. Pass NULL for the defaults
/// (`rtol = 1e-10`, `atol = 1e-12`, 2048 samples).
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinfTolerances {
    pub rtol: f64,
    pub atol: f64,
    pub samples: usize,
}

/// Opaque sampled solution.
pub struct LinfTrajectory {
    inner: Trajectory,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: LinfStatus, msg: impl Into<String>) -> LinfStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> LinfStatus) -> LinfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(LinfStatus::Internal, "internal panic"),
    }
}

/// Message of the last failure on this thread, or NULL. Valid until the next
/// failing call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn linf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map(|s| s.as_ptr()).unwrap_or(ptr::null()))
}

/// # Safety
/// `p` must point to `n` readable doubles.
unsafe fn vector(p: *const f64, n: usize) -> Vector {
    Vector::from_column_slice(std::slice::from_raw_parts(p, n))
}

unsafe fn vec3(p: *const f64) -> Vector3<f64> {
    Vector3::from_column_slice(std::slice::from_raw_parts(p, 3))
}

unsafe fn options(tol: *const LinfTolerances) -> IntegrateOptions {
    match tol.as_ref() {
        Some(t) => IntegrateOptions::with_tolerances(t.rtol, t.atol).samples(t.samples),
        None => IntegrateOptions::default(),
    }
}

fn finish_integration(res: Result<Trajectory, ode::OdeError>, out: *mut *mut LinfTrajectory) -> LinfStatus {
    match res {
        Ok(tr) => {
            let halted = matches!(tr.termination, Termination::FieldVanished { .. });
            let t_end = tr.end_time();
            unsafe { *out = Box::into_raw(Box::new(LinfTrajectory { inner: tr })) };
            if halted {
                fail(LinfStatus::NumericalEvent, format!("field vanished at t = {t_end}"))
            } else {
                LinfStatus::Ok
            }
        }
        Err(e @ (ode::OdeError::BadState { .. } | ode::OdeError::BadSpan(..) | ode::OdeError::TooFewSamples { .. })) => {
            fail(LinfStatus::Validation, e.to_string())
        }
        Err(e) => fail(LinfStatus::Internal, e.to_string()),
    }
}

/// Integrates the extremal system on the unit sphere in `R^n` (`n ≥ 2`).
/// `x`, `xdot`, `field` and `field_rate` each hold `n` doubles.
///
/// # Safety
/// Pointers must be valid for the stated lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn linf_sphere_integrate(
    n: usize,
    x: *const f64,
    xdot: *const f64,
    field: *const f64,
    field_rate: *const f64,
    z: f64,
    t0: f64,
    t1: f64,
    tol: *const LinfTolerances,
    out: *mut *mut LinfTrajectory,
) -> LinfStatus {
    guard(|| {
        if x.is_null() || xdot.is_null() || field.is_null() || field_rate.is_null() || out.is_null() {
            return fail(LinfStatus::NullPointer, "null pointer argument");
        }
        if n < 2 {
            return fail(LinfStatus::Validation, "ambient dimension must be at least 2");
        }
        let s = ExtremalState { x: vector(x, n), xdot: vector(xdot, n), field: vector(field, n), field_rate: vector(field_rate, n), z };
        if (s.x.norm() - 1.0).abs() > 1e-9 {
            return fail(LinfStatus::Validation, "x not on sphere (tolerance 1e-9)");
        }
        let kind = SystemKind::Extremal { manifold: ManifoldId::sphere(n - 1) };
        finish_integration(ode::integrate(kind, &s.pack(), (t0, t1), &options(tol)), out)
    })
}

/// Integrates the reduced `SO(3)` system `V' = zW/‖W‖`, `W' = W × V + C`.
/// `v`, `w` and `c` each hold 3 doubles.
///
/// # Safety
/// Pointers must be valid for 3 doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn linf_so3_integrate(
    v: *const f64,
    w: *const f64,
    z: f64,
    c: *const f64,
    t0: f64,
    t1: f64,
    tol: *const LinfTolerances,
    out: *mut *mut LinfTrajectory,
) -> LinfStatus {
    guard(|| {
        if v.is_null() || w.is_null() || c.is_null() || out.is_null() {
            return fail(LinfStatus::NullPointer, "null pointer argument");
        }
        let s = So3ReducedState { v: vec3(v), w: vec3(w), z, c: vec3(c) };
        finish_integration(ode::integrate(SystemKind::So3Reduced, &s.pack(), (t0, t1), &options(tol)), out)
    })
}

/// Conserved quantities `c = ‖W'‖²` and `a = z‖W‖ − ⟨C, V⟩` of a reduced state.
///
/// # Safety
/// Input pointers must be valid for 3 doubles; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn linf_so3_conserved(
    v: *const f64,
    w: *const f64,
    z: f64,
    c: *const f64,
    out_c: *mut f64,
    out_a: *mut f64,
) -> LinfStatus {
    guard(|| {
        if v.is_null() || w.is_null() || c.is_null() || out_c.is_null() || out_a.is_null() {
            return fail(LinfStatus::NullPointer, "null pointer argument");
        }
        let s = So3ReducedState { v: vec3(v), w: vec3(w), z, c: vec3(c) };
        let (cc, a) = lie::conserved(&s);
        *out_c = cc;
        *out_a = a;
        LinfStatus::Ok
    })
}

/// Number of samples, or 0 for NULL.
///
/// # Safety
/// `t` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn linf_trajectory_len(t: *const LinfTrajectory) -> usize {
    t.as_ref().map(|t| t.inner.len()).unwrap_or(0)
}

/// Length of each state vector, or 0 for NULL.
///
/// # Safety
/// `t` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn linf_trajectory_state_dim(t: *const LinfTrajectory) -> usize {
    t.as_ref().map(|t| t.inner.kind.state_dim()).unwrap_or(0)
}

/// # Safety
/// `t` must be NULL or a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn linf_trajectory_time(t: *const LinfTrajectory, i: usize, out: *mut f64) -> LinfStatus {
    guard(|| {
        let (Some(t), false) = (t.as_ref(), out.is_null()) else {
            return fail(LinfStatus::NullPointer, "null pointer argument");
        };
        match t.inner.times.get(i) {
            Some(v) => {
                *out = *v;
                LinfStatus::Ok
            }
            None => fail(LinfStatus::Validation, format!("sample {i} out of range")),
        }
    })
}

/// Copies sample `i` into `out`, which must hold `len ≥ state_dim` doubles.
///
/// # Safety
/// `t` must be NULL or a live handle; `out` must be writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn linf_trajectory_state(t: *const LinfTrajectory, i: usize, out: *mut f64, len: usize) -> LinfStatus {
    guard(|| {
        let (Some(t), false) = (t.as_ref(), out.is_null()) else {
            return fail(LinfStatus::NullPointer, "null pointer argument");
        };
        let Some(y) = t.inner.states.get(i) else {
            return fail(LinfStatus::Validation, format!("sample {i} out of range"));
        };
        if len < y.len() {
            return fail(LinfStatus::Validation, format!("buffer holds {len} values, state has {}", y.len()));
        }
        std::slice::from_raw_parts_mut(out, y.len()).copy_from_slice(y.as_slice());
        LinfStatus::Ok
    })
}

/// Diagnostics report as a JSON string (free with [`linf_string_free`]), or
/// NULL on failure.
///
/// # Safety
/// `t` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn linf_trajectory_report_json(t: *const LinfTrajectory) -> *mut c_char {
    let Some(t) = t.as_ref() else {
        set_error("null pointer argument");
        return ptr::null_mut();
    };
    let res = catch_unwind(AssertUnwindSafe(|| diagnostics::analyze(&t.inner, &Thresholds::default())));
    match res {
        Ok(Ok(r)) => CString::new(serde_json::to_string(&r).expect("report serializes")).map(CString::into_raw).unwrap_or(ptr::null_mut()),
        Ok(Err(e)) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
        Err(_) => {
            set_error("internal panic");
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `t` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn linf_trajectory_free(t: *mut LinfTrajectory) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn linf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Runs a JSON run configuration and writes its artifacts into `out_dir`.
/// Returns the command-line exit code (0 success, 2 validation,
/// 3 nonconvergence, 4 numerical event, 5 failed verdict, 1 I/O, 6 internal
/// error, -1 bad arguments).
///
/// # Safety
/// Both arguments must be NULL or NUL-terminated UTF-8 strings.
#[no_mangle]
pub unsafe extern "C" fn linf_run_config(config_json: *const c_char, out_dir: *const c_char) -> i32 {
    if config_json.is_null() || out_dir.is_null() {
        set_error("null pointer argument");
        return -1;
    }
    let (Ok(text), Ok(dir)) = (CStr::from_ptr(config_json).to_str(), CStr::from_ptr(out_dir).to_str()) else {
        set_error("arguments are not UTF-8");
        return -1;
    };
    let res = catch_unwind(AssertUnwindSafe(|| {
        let cfg = RunConfig::from_json(text).map_err(|e| run::RunError::Validation(vec![e]))?;
        let outcome = run::execute(&cfg)?;
        run::write_artifacts(&cfg, &outcome, Path::new(dir))?;
        Ok::<i32, run::RunError>(outcome.exit_code())
    }));
    match res {
        Ok(Ok(code)) => code,
        Ok(Err(e)) => {
            set_error(e.to_json());
            e.exit_code()
        }
        Err(_) => {
            set_error("internal panic");
            6
        }
    }
}

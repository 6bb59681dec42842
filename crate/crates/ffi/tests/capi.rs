use linf_accel_ffi::*;
use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

fn last_error() -> String {
    let p = linf_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn sphere_example_through_the_c_abi() {
    let (x, xd, f, fr) = ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 1.0, 200.0], [-1.0, 2.0, 1.0]);
    let tol = LinfTolerances { rtol: 1e-10, atol: 1e-12, samples: 801 };
    let mut out = ptr::null_mut();
    let st = unsafe { linf_sphere_integrate(3, x.as_ptr(), xd.as_ptr(), f.as_ptr(), fr.as_ptr(), 1.2, 0.0, 8.0, &tol, &mut out) };
    assert_eq!(st, LinfStatus::Ok);
    unsafe {
        let n = linf_trajectory_len(out);
        assert_eq!(n, 801);
        let dim = linf_trajectory_state_dim(out);
        assert_eq!(dim, 13);
        let mut t = 0.0;
        assert_eq!(linf_trajectory_time(out, n - 1, &mut t), LinfStatus::Ok);
        assert_eq!(t, 8.0);
        let mut y = vec![0.0; dim];
        assert_eq!(linf_trajectory_state(out, n - 1, y.as_mut_ptr(), y.len()), LinfStatus::Ok);
        for (got, want) in y[..3].iter().zip([-0.433207, 0.898726, 0.0679917]) {
            assert!((got - want).abs() < 1e-3);
        }
        assert_eq!(linf_trajectory_state(out, n, y.as_mut_ptr(), y.len()), LinfStatus::Validation);
        assert_eq!(linf_trajectory_state(out, 0, y.as_mut_ptr(), 2), LinfStatus::Validation);
        let json = linf_trajectory_report_json(out);
        assert!(!json.is_null());
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        linf_string_free(json);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["verdicts"]["z_constancy"]["pass"], true);
        linf_trajectory_free(out);
    }
}

#[test]
fn so3_conserved_quantities() {
    let (v, w, c) = ([1.0, 2.0, 3.0], [-1.0, -4.0, 6.0], [-2.0, -1.0, 0.0]);
    let (mut cc, mut a) = (0.0, 0.0);
    let st = unsafe { linf_so3_conserved(v.as_ptr(), w.as_ptr(), 1.2, c.as_ptr(), &mut cc, &mut a) };
    assert_eq!(st, LinfStatus::Ok);
    assert!((cc - 744.0).abs() < 1e-9);
    assert!((a - (1.2 * 53f64.sqrt() + 4.0)).abs() < 1e-12);
    let mut out = ptr::null_mut();
    let st = unsafe { linf_so3_integrate(v.as_ptr(), w.as_ptr(), 1.2, [2.0, 1.0, 0.0].as_ptr(), 0.0, 5.0, ptr::null(), &mut out) };
    assert_eq!(st, LinfStatus::Ok);
    unsafe {
        let mut y = [0.0; 10];
        assert_eq!(linf_trajectory_state(out, linf_trajectory_len(out) - 1, y.as_mut_ptr(), 10), LinfStatus::Ok);
        assert!((y[0] - 1.77133).abs() < 1e-4);
        linf_trajectory_free(out);
    }
}

#[test]
fn errors_are_reported() {
    let mut out = ptr::null_mut();
    let bad = [0.9, 0.0, 0.0];
    let z3 = [0.0; 3];
    let st = unsafe { linf_sphere_integrate(3, bad.as_ptr(), z3.as_ptr(), z3.as_ptr(), z3.as_ptr(), 1.0, 0.0, 1.0, ptr::null(), &mut out) };
    assert_eq!(st, LinfStatus::Validation);
    assert!(last_error().contains("not on sphere"));
    assert!(out.is_null());
    let st = unsafe { linf_sphere_integrate(3, ptr::null(), z3.as_ptr(), z3.as_ptr(), z3.as_ptr(), 1.0, 0.0, 1.0, ptr::null(), &mut out) };
    assert_eq!(st, LinfStatus::NullPointer);
    let st = unsafe { linf_so3_integrate(z3.as_ptr(), [1.0, 0.0, 0.0].as_ptr(), 1.0, z3.as_ptr(), 1.0, 0.0, ptr::null(), &mut out) };
    assert_eq!(st, LinfStatus::Validation);
    unsafe {
        assert_eq!(linf_trajectory_len(ptr::null()), 0);
        linf_trajectory_free(ptr::null_mut());
        linf_string_free(ptr::null_mut());
    }
}

#[test]
fn run_config_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = linf_accel::config::preset("so3-example-short").unwrap().to_json();
    let cfg = CString::new(cfg).unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    let code = unsafe { linf_run_config(cfg.as_ptr(), out.as_ptr()) };
    assert_eq!(code, 0);
    assert!(dir.path().join("trajectory.csv").exists());
    assert!(dir.path().join("report.json").exists());
    let bad = CString::new("{\"mode\": \"ivp\"}").unwrap();
    assert_eq!(unsafe { linf_run_config(bad.as_ptr(), out.as_ptr()) }, 2);
    assert!(last_error().contains("validation"));
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/linf_accel.h");
    let text = std::fs::read_to_string(header).unwrap();
    for f in ["linf_sphere_integrate", "linf_so3_integrate", "linf_trajectory_free", "linf_run_config", "linf_last_error"] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let Ok(st) = Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header]).status() else {
        eprintln!("no C compiler available; skipped");
        return;
    };
    assert!(st.success());
}

//! Trajectory files: CSV with a fixed column order and 17 significant
//! digits, or a columns/rows JSON document.

use crate::ode::{SystemKind, Trajectory};
use crate::Vector;
use std::fmt::Write as _;

/// `t`, the state components, `phi` (systems with a field) and `accel_norm`.
pub fn columns(kind: &SystemKind) -> Vec<String> {
    let mut out = vec!["t".to_string()];
    out.extend(kind.component_names());
    if has_field(kind) {
        out.push("phi".to_string());
    }
    out.push("accel_norm".to_string());
    out
}

fn has_field(kind: &SystemKind) -> bool {
    matches!(kind, SystemKind::Extremal { .. } | SystemKind::So3Reduced)
}

fn row(traj: &Trajectory, i: usize) -> Vec<f64> {
    let mut r = Vec::with_capacity(traj.states[i].len() + 3);
    r.push(traj.times[i]);
    r.extend(traj.states[i].iter());
    if has_field(&traj.kind) {
        r.push(traj.phi(i).unwrap_or(f64::NAN));
    }
    r.push(traj.covariant_acceleration(i).norm());
    r
}

pub fn to_csv(traj: &Trajectory) -> String {
    let mut s = columns(&traj.kind).join(",");
    s.push('\n');
    for i in 0..traj.len() {
        let r = row(traj, i);
        for (j, v) in r.iter().enumerate() {
            if j > 0 {
                s.push(',');
            }
            let _ = write!(s, "{v:.16e}");
        }
        s.push('\n');
    }
    s
}

pub fn to_json(traj: &Trajectory) -> String {
    let rows: Vec<Vec<f64>> = (0..traj.len()).map(|i| row(traj, i)).collect();
    let doc = serde_json::json!({
        "system": traj.kind,
        "columns": columns(&traj.kind),
        "rows": rows,
    });
    serde_json::to_string(&doc).expect("trajectory serializes")
}

/// Reads a CSV written by [`to_csv`] back into a trajectory of `kind`.
/// Derived columns (`phi`, `accel_norm`) are ignored.
pub fn from_csv(text: &str, kind: SystemKind) -> Result<Trajectory, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().ok_or("empty trajectory file")?.split(',').map(str::trim).collect();
    let want = columns(&kind);
    let state_cols = kind.component_names().len();
    if header.len() < state_cols + 1 || header[..=state_cols] != want[..=state_cols].iter().map(String::as_str).collect::<Vec<_>>()[..] {
        return Err(format!("header does not match {}: expected columns starting {}", kind.label(), want[..=state_cols].join(",")));
    }
    let (mut times, mut states) = (Vec::new(), Vec::new());
    for (ln, line) in lines.enumerate() {
        let vals: Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|e| format!("row {}: {e}", ln + 1))?;
        if vals.len() != header.len() {
            return Err(format!("row {}: {} values, header has {}", ln + 1, vals.len(), header.len()));
        }
        times.push(vals[0]);
        states.push(Vector::from_column_slice(&vals[1..=state_cols]));
    }
    Trajectory::from_samples(kind, times, states).map_err(|e| e.to_string())
}

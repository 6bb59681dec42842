use super::{DenseSegment, ExtremalState, OdeError, So3ReducedState, StepStats, SystemKind};
use crate::manifold::{Curve, GeometryError, ManifoldId, Vector};
use serde::Serialize;
use std::collections::BTreeMap;

/// How an integration ended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    Completed,
    /// The field `X` (or `W`) reached the zero threshold at `time`.
    FieldVanished { time: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IntegrationStats {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub rhs_evals: usize,
    /// Largest per-step drift of each tracked invariant (absolute for the
    /// sphere constraints, relative for conserved quantities).
    pub max_drift: BTreeMap<String, f64>,
}

/// A sampled solution together with the integrator's dense output.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub kind: SystemKind,
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    /// Times where the field passed through (or reached) zero.
    pub events: Vec<f64>,
    pub termination: Termination,
    pub stats: IntegrationStats,
    pub dense: Vec<DenseSegment>,
}

impl Trajectory {
    /// Wraps externally produced samples (no dense output).
    pub fn from_samples(kind: SystemKind, times: Vec<f64>, states: Vec<Vector>) -> Result<Self, OdeError> {
        if times.len() != states.len() {
            return Err(OdeError::Incompatible(format!("{} times but {} states", times.len(), states.len())));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(OdeError::NonIncreasingTimes);
        }
        for s in &states {
            kind.check_state(s)?;
        }
        Ok(Trajectory {
            kind,
            times,
            states,
            events: Vec::new(),
            termination: Termination::Completed,
            stats: IntegrationStats::default(),
            dense: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn manifold(&self) -> ManifoldId {
        self.kind.manifold()
    }

    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("empty trajectory")
    }

    pub fn final_state(&self) -> &Vector {
        self.states.last().expect("empty trajectory")
    }

    /// State at an arbitrary time inside the span, from the dense output when
    /// available and by linear interpolation between samples otherwise.
    pub fn state_at(&self, t: f64) -> Vector {
        if let Ok(i) = self.times.binary_search_by(|s| s.total_cmp(&t)) {
            return self.states[i].clone();
        }
        if !self.dense.is_empty() {
            let i = self.dense.partition_point(|s| s.end() < t).min(self.dense.len() - 1);
            return self.dense[i].eval(t);
        }
        let n = self.times.len();
        let j = self.times.partition_point(|&s| s < t).clamp(1, n - 1);
        let (t0, t1) = (self.times[j - 1], self.times[j]);
        let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        &self.states[j - 1] * (1.0 - w) + &self.states[j] * w
    }

    /// Copy sampled on `n` uniformly spaced times over `[a, b]`.
    pub fn resample(&self, a: f64, b: f64, n: usize) -> Trajectory {
        let times: Vec<f64> = (0..n)
            .map(|k| if k + 1 == n { b } else { a + (b - a) * k as f64 / (n - 1) as f64 })
            .collect();
        let states = times.iter().map(|&t| self.state_at(t)).collect();
        let dense = self.dense.iter().filter(|s| s.end() >= a && s.t <= b).cloned().collect();
        Trajectory { times, states, dense, ..self.clone() }
    }

    fn block(&self, i: usize, k: usize) -> Vector {
        let n = self.manifold().ambient_dim();
        self.states[i].rows(k * n, n).into_owned()
    }

    /// Point on the manifold (`x`); for `SO(3)` systems the reduced velocity `V`.
    pub fn configuration(&self, i: usize) -> Vector {
        self.block(i, 0)
    }

    /// Velocity `ẋ`, or `V` for `SO(3)` systems.
    pub fn velocity(&self, i: usize) -> Vector {
        self.velocity_of(&self.states[i])
    }

    /// Velocity part of an arbitrary state vector of this system.
    pub fn velocity_of(&self, y: &Vector) -> Vector {
        let n = self.manifold().ambient_dim();
        match self.kind {
            SystemKind::So3Reduced | SystemKind::RiemannianCubic { manifold: ManifoldId::So3 } => y.rows(0, n).into_owned(),
            _ => y.rows(n, n).into_owned(),
        }
    }

    /// The multiplier field `X` (or `W`), when the system carries one.
    pub fn field(&self, i: usize) -> Option<Vector> {
        match self.kind {
            SystemKind::Extremal { .. } => Some(self.block(i, 2)),
            SystemKind::So3Reduced => Some(self.block(i, 1)),
            _ => None,
        }
    }

    pub fn z(&self) -> Option<f64> {
        match self.kind {
            SystemKind::Extremal { manifold } => Some(self.states[0][4 * manifold.ambient_dim()]),
            SystemKind::So3Reduced => Some(self.states[0][6]),
            _ => None,
        }
    }

    /// Covariant acceleration `∇ₜẋ` (or `V̇`) evaluated from the state.
    ///
    /// For extremals this is `zX/‖X‖`; where the field vanishes the right
    /// limit `zẊ/‖Ẋ‖` is used.
    pub fn covariant_acceleration(&self, i: usize) -> Vector {
        match self.kind {
            SystemKind::Extremal { .. } => {
                let s = ExtremalState::unpack(&self.states[i]);
                unit_or_limit(&s.field, &s.field_rate) * s.z
            }
            SystemKind::So3Reduced => {
                let s = So3ReducedState::unpack(&self.states[i]);
                let rate = s.w.cross(&s.v) + s.c;
                let d = unit_or_limit(&Vector::from_column_slice(s.w.as_slice()), &Vector::from_column_slice(rate.as_slice()));
                d * s.z
            }
            SystemKind::RiemannianCubic { manifold: ManifoldId::So3 } => self.block(i, 1),
            SystemKind::RiemannianCubic { .. } | SystemKind::Sampled { .. } => self.block(i, 2),
        }
    }

    /// `φ = ‖X‖/z` (or `‖W‖/z`); `None` for systems without a field or with `z = 0`.
    pub fn phi(&self, i: usize) -> Option<f64> {
        let z = self.z()?;
        if z <= 0.0 {
            return None;
        }
        Some(self.field(i)?.norm() / z)
    }

    /// Positions and velocities as a [`Curve`] for finite-difference geometry.
    pub fn curve(&self) -> Result<Curve, GeometryError> {
        let n = self.len();
        let points = match self.manifold() {
            ManifoldId::So3 => Vec::new(),
            _ => (0..n).map(|i| self.configuration(i)).collect(),
        };
        let velocities = (0..n).map(|i| self.velocity(i)).collect();
        Curve::new(self.manifold(), self.times.clone(), points, velocities)
    }

    /// Concatenates trajectories of the same system end to end. A sample of
    /// the next piece coinciding in time with the previous end is dropped.
    pub fn track_sum(pieces: &[Trajectory]) -> Result<Trajectory, OdeError> {
        let first = pieces.first().ok_or_else(|| OdeError::Incompatible("no pieces".into()))?;
        let mut out = first.clone();
        for p in &pieces[1..] {
            if p.kind != out.kind {
                return Err(OdeError::Incompatible("pieces belong to different systems".into()));
            }
            let end = out.end_time();
            let tol = 1e-12 * end.abs().max(1.0);
            if p.start_time() < end - tol {
                return Err(OdeError::NonIncreasingTimes);
            }
            for (t, s) in p.times.iter().zip(&p.states) {
                if *t > end + tol {
                    out.times.push(*t);
                    out.states.push(s.clone());
                }
            }
            out.events.extend_from_slice(&p.events);
            out.dense.extend(p.dense.iter().cloned());
            out.termination = p.termination;
            out.stats.accepted_steps += p.stats.accepted_steps;
            out.stats.rejected_steps += p.stats.rejected_steps;
            out.stats.rhs_evals += p.stats.rhs_evals;
            for (k, v) in &p.stats.max_drift {
                let e = out.stats.max_drift.entry(k.clone()).or_insert(0.0);
                *e = e.max(*v);
            }
        }
        Ok(out)
    }
}

fn unit_or_limit(field: &Vector, rate: &Vector) -> Vector {
    let n = field.norm();
    if n > super::ZERO_THRESHOLD {
        field / n
    } else if rate.norm() > 0.0 {
        rate / rate.norm()
    } else {
        Vector::zeros(field.len())
    }
}

/// Collects grid samples and dense segments while stepping.
pub(super) struct Builder<'g> {
    kind: SystemKind,
    grid: &'g [f64],
    next: usize,
    keep_dense: bool,
    times: Vec<f64>,
    states: Vec<Vector>,
    events: Vec<f64>,
    dense: Vec<DenseSegment>,
    reference: Option<(f64, f64)>,
    drift: BTreeMap<String, f64>,
}

impl<'g> Builder<'g> {
    pub fn new(kind: SystemKind, grid: &'g [f64], keep_dense: bool) -> Self {
        Builder {
            kind,
            grid,
            next: 0,
            keep_dense,
            times: Vec::with_capacity(grid.len()),
            states: Vec::with_capacity(grid.len()),
            events: Vec::new(),
            dense: Vec::new(),
            reference: None,
            drift: BTreeMap::new(),
        }
    }

    pub fn push_sample(&mut self, t: f64, y: Vector) {
        self.times.push(t);
        self.states.push(y);
        self.next = self.grid.partition_point(|&g| g <= t);
    }

    pub fn record_event(&mut self, t: f64) {
        if self.events.last().map(|&e| (t - e).abs() > 1e-9 * t.abs().max(1.0)).unwrap_or(true) {
            self.events.push(t);
        }
    }

    pub fn push_segment(&mut self, seg: &DenseSegment) {
        let end = seg.end();
        while self.next < self.grid.len() && self.grid[self.next] <= end {
            let t = self.grid[self.next];
            self.times.push(t);
            self.states.push(seg.eval(t));
            self.next += 1;
        }
        if self.keep_dense {
            self.dense.push(seg.clone());
        }
    }

    pub fn push_segment_until(&mut self, seg: &DenseSegment, stop: f64) {
        while self.next < self.grid.len() && self.grid[self.next] < stop {
            let t = self.grid[self.next];
            self.times.push(t);
            self.states.push(seg.eval(t));
            self.next += 1;
        }
        // The whole step is kept; queries past `stop` never happen because
        // the trajectory ends there.
        if self.keep_dense && stop > seg.t {
            self.dense.push(seg.clone());
        }
    }

    /// Records the worst invariant drift seen so far.
    pub fn track_drift(&mut self, kind: &SystemKind, y: &Vector) {
        let mut put = |name: &str, v: f64| match self.drift.get_mut(name) {
            Some(e) => *e = e.max(v),
            None => {
                self.drift.insert(name.to_string(), v);
            }
        };
        match kind {
            SystemKind::Extremal { manifold: ManifoldId::Sphere { .. } } => {
                for (k, v) in ExtremalState::unpack(y).sphere_constraints() {
                    put(k, v);
                }
            }
            SystemKind::So3Reduced => {
                let s = So3ReducedState::unpack(y);
                let (c, a) = crate::lie::conserved(&s);
                let (c0, a0) = *self.reference.get_or_insert((c, a));
                put("c", (c - c0).abs() / c0.abs().max(f64::MIN_POSITIVE));
                put("a", (a - a0).abs() / a0.abs().max(f64::MIN_POSITIVE));
            }
            _ => {}
        }
    }

    fn build(self, termination: Termination, steps: StepStats) -> Trajectory {
        Trajectory {
            kind: self.kind,
            times: self.times,
            states: self.states,
            events: self.events,
            termination,
            stats: IntegrationStats {
                accepted_steps: steps.accepted,
                rejected_steps: steps.rejected,
                rhs_evals: steps.rhs_evals,
                max_drift: self.drift,
            },
            dense: self.dense,
        }
    }

    pub fn finish(mut self, t_end: f64, y_end: Vector, steps: StepStats) -> Trajectory {
        // The last grid time equals the span end; prefer the stepper's final
        // (projected) state over the interpolant there.
        if let Some(last) = self.times.last() {
            if (*last - t_end).abs() <= 1e-12 * t_end.abs().max(1.0) {
                *self.states.last_mut().unwrap() = y_end;
            } else if *last < t_end {
                self.times.push(t_end);
                self.states.push(y_end);
            }
        }
        self.build(Termination::Completed, steps)
    }

    pub fn finish_event(mut self, t: f64, y: Vector, steps: StepStats) -> Trajectory {
        if t > *self.times.last().unwrap() {
            self.times.push(t);
            self.states.push(y);
        }
        self.record_event(t);
        self.build(Termination::FieldVanished { time: t }, steps)
    }
}

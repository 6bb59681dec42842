//! Dormand–Prince 5(4) stepper with PI step-size control and the
//! Hairer–Wanner continuous extension (dense output of order 4).

use super::OdeError;
use crate::manifold::Vector;

/// Right-hand side of a first-order system `y' = f(t, y)`.
pub(crate) trait OdeSystem {
    fn dim(&self) -> usize;

    /// Evaluates `f(t, y)` into `dy`. `Err(())` flags a singular state
    /// (a vanishing field), which the stepper treats as a rejected step.
    #[allow(clippy::result_unit_err)]
    fn rhs(&self, t: f64, y: &Vector, dy: &mut Vector) -> Result<(), ()>;

    /// Re-imposes manifold constraints after an accepted step. Returns true
    /// when the state was modified.
    fn project(&self, _y: &mut Vector) -> bool {
        false
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub h_max: f64,
}

/// Continuous extension over one accepted step `[t, t + h]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSegment {
    pub t: f64,
    pub h: f64,
    coeffs: [Vector; 5],
}

impl DenseSegment {
    pub fn end(&self) -> f64 {
        self.t + self.h
    }

    /// Interpolated state at `t` (extrapolates if `t` lies outside the step).
    pub fn eval(&self, t: f64) -> Vector {
        let s = (t - self.t) / self.h;
        let s1 = 1.0 - s;
        let [r1, r2, r3, r4, r5] = &self.coeffs;
        let mut inner = r5 * s1;
        inner += r4;
        inner *= s;
        inner += r3;
        inner *= s1;
        inner += r2;
        inner *= s;
        inner + r1
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

pub(crate) enum StepFailure {
    /// The right-hand side stayed singular down to the minimum step.
    Singular { t: f64 },
    Ode(OdeError),
}

pub(crate) struct Stepper<'a, S: OdeSystem> {
    sys: &'a S,
    opts: StepperOptions,
    t: f64,
    tend: f64,
    y: Vector,
    k: [Vector; 7],
    h: f64,
    facold: f64,
    pub stats: StepStats,
}

impl<'a, S: OdeSystem> Stepper<'a, S> {
    pub fn new(sys: &'a S, t0: f64, y0: Vector, tend: f64, opts: StepperOptions) -> Result<Self, StepFailure> {
        let n = sys.dim();
        let zero = Vector::zeros(n);
        let k = [zero.clone(), zero.clone(), zero.clone(), zero.clone(), zero.clone(), zero.clone(), zero];
        let mut st = Stepper { sys, opts, t: t0, tend, y: y0, k, h: 0.0, facold: 1e-4, stats: StepStats::default() };
        let mut f0 = Vector::zeros(n);
        st.eval(t0, &st.y.clone(), &mut f0).map_err(|_| StepFailure::Singular { t: t0 })?;
        st.k[0] = f0;
        st.h = st.initial_step()?;
        Ok(st)
    }

    pub fn state(&self) -> &Vector {
        &self.y
    }

    pub fn finished(&self) -> bool {
        self.t >= self.tend
    }

    fn eval(&mut self, t: f64, y: &Vector, dy: &mut Vector) -> Result<(), ()> {
        self.stats.rhs_evals += 1;
        self.sys.rhs(t, y, dy)
    }

    fn scale(&self, y0: &Vector, y1: &Vector, i: usize) -> f64 {
        self.opts.atol + self.opts.rtol * y0[i].abs().max(y1[i].abs())
    }

    fn initial_step(&mut self) -> Result<f64, StepFailure> {
        let n = self.y.len() as f64;
        let span = self.tend - self.t;
        let (mut d0, mut d1) = (0.0, 0.0);
        for i in 0..self.y.len() {
            let sk = self.scale(&self.y, &self.y, i);
            d0 += (self.y[i] / sk).powi(2);
            d1 += (self.k[0][i] / sk).powi(2);
        }
        let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 }.min(span);
        let y1 = &self.y + &self.k[0] * h0;
        let mut f1 = Vector::zeros(self.y.len());
        if self.eval(self.t + h0, &y1, &mut f1).is_err() {
            return Ok(h0 * 1e-2);
        }
        let mut d2 = 0.0;
        for i in 0..self.y.len() {
            let sk = self.scale(&self.y, &self.y, i);
            d2 += ((f1[i] - self.k[0][i]) / sk).powi(2);
        }
        let d2 = (d2 / n).sqrt() / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        Ok((100.0 * h0).min(h1).min(span).min(self.opts.h_max))
    }

    /// Advances by one accepted step and returns its dense segment.
    pub fn step(&mut self) -> Result<DenseSegment, StepFailure> {
        let n = self.y.len();
        let expo1 = 0.2 - BETA * 0.75;
        loop {
            if self.stats.accepted + self.stats.rejected >= self.opts.max_steps {
                return Err(StepFailure::Ode(OdeError::TooManySteps { t: self.t }));
            }
            let mut h = self.h.min(self.opts.h_max);
            let last = self.t + h >= self.tend || (self.tend - self.t - h) < 1e-12 * self.tend.abs().max(1.0);
            if last {
                h = self.tend - self.t;
            }
            let h_min = 16.0 * f64::EPSILON * self.t.abs().max(1.0);
            if h < h_min {
                return Err(StepFailure::Singular { t: self.t });
            }
            match self.try_step(h) {
                Ok((y1, err)) => {
                    let fac11 = err.powf(expo1);
                    if err <= 1.0 {
                        let fac = (fac11 / self.facold.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
                        self.facold = err.max(1e-4);
                        self.stats.accepted += 1;
                        let seg = self.dense(h, &y1);
                        self.t = if last { self.tend } else { self.t + h };
                        self.y = y1;
                        self.k.swap(0, 6);
                        if self.sys.project(&mut self.y) {
                            let (t, y) = (self.t, self.y.clone());
                            let mut f = Vector::zeros(n);
                            self.eval(t, &y, &mut f).map_err(|_| StepFailure::Singular { t })?;
                            self.k[0] = f;
                        }
                        self.h = h / fac;
                        return Ok(seg);
                    }
                    self.stats.rejected += 1;
                    self.h = h / (fac11 / SAFETY).min(1.0 / FAC_MIN);
                }
                Err(()) => {
                    self.stats.rejected += 1;
                    self.h = h * 0.25;
                }
            }
        }
    }

    fn try_step(&mut self, h: f64) -> Result<(Vector, f64), ()> {
        let t = self.t;
        let y = self.y.clone();
        let n = y.len();
        let mut tmp;
        let mut f = Vector::zeros(n);

        tmp = &y + &self.k[0] * (h * A21);
        self.eval(t + C2 * h, &tmp, &mut f)?;
        self.k[1].copy_from(&f);

        tmp = &y + (&self.k[0] * A31 + &self.k[1] * A32) * h;
        self.eval(t + C3 * h, &tmp, &mut f)?;
        self.k[2].copy_from(&f);

        tmp = &y + (&self.k[0] * A41 + &self.k[1] * A42 + &self.k[2] * A43) * h;
        self.eval(t + C4 * h, &tmp, &mut f)?;
        self.k[3].copy_from(&f);

        tmp = &y + (&self.k[0] * A51 + &self.k[1] * A52 + &self.k[2] * A53 + &self.k[3] * A54) * h;
        self.eval(t + C5 * h, &tmp, &mut f)?;
        self.k[4].copy_from(&f);

        tmp = &y
            + (&self.k[0] * A61 + &self.k[1] * A62 + &self.k[2] * A63 + &self.k[3] * A64 + &self.k[4] * A65) * h;
        self.eval(t + h, &tmp, &mut f)?;
        self.k[5].copy_from(&f);

        let y1 = &y
            + (&self.k[0] * A71 + &self.k[2] * A73 + &self.k[3] * A74 + &self.k[4] * A75 + &self.k[5] * A76) * h;
        self.eval(t + h, &y1, &mut f)?;
        self.k[6].copy_from(&f);

        let errv = (&self.k[0] * E1
            + &self.k[2] * E3
            + &self.k[3] * E4
            + &self.k[4] * E5
            + &self.k[5] * E6
            + &self.k[6] * E7)
            * h;
        let mut err = 0.0;
        for i in 0..n {
            err += (errv[i] / self.scale(&y, &y1, i)).powi(2);
        }
        let err = (err / n as f64).sqrt();
        if !err.is_finite() || y1.iter().any(|v| !v.is_finite()) {
            return Err(());
        }
        Ok((y1, err))
    }

    fn dense(&self, h: f64, y1: &Vector) -> DenseSegment {
        let y0 = &self.y;
        let ydiff = y1 - y0;
        let bspl = &self.k[0] * h - &ydiff;
        let r4 = &ydiff - &self.k[6] * h - &bspl;
        let r5 = (&self.k[0] * D1
            + &self.k[2] * D3
            + &self.k[3] * D4
            + &self.k[4] * D5
            + &self.k[5] * D6
            + &self.k[6] * D7)
            * h;
        DenseSegment { t: self.t, h, coeffs: [y0.clone(), ydiff, bspl, r4, r5] }
    }
}

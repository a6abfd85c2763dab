//! Dormand–Prince 5(4) with Hairer's dense output, PI step control and
//! event location on the interpolant.
//!
//! The solver works on `[f64; N]` states so the same code drives planar
//! flows, flows augmented with an accumulated divergence, and the
//! three-dimensional blow-up chart.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{PlanarField, Point, Rect};
use crate::report::{fmt17, Table};

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
/// Samples of the interpolant per step used for sign-change detection.
const EVENT_SAMPLES: usize = 9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub event_tol: f64,
    /// Longest |t − t0| that section searches may cover.
    pub max_time: f64,
    pub max_steps: usize,
    /// Keep every accepted step in the solution.
    pub record: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rtol: 1e-10,
            atol: 1e-12,
            max_step: f64::INFINITY,
            event_tol: 1e-12,
            max_time: 1e3,
            max_steps: 5_000_000,
            record: true,
        }
    }
}

impl IntegratorConfig {
    pub fn with_tolerances(mut self, rtol: f64, atol: f64) -> Self {
        self.rtol = rtol;
        self.atol = atol;
        self
    }

    pub fn with_max_time(mut self, t: f64) -> Self {
        self.max_time = t;
        self
    }

    pub fn with_max_step(mut self, h: f64) -> Self {
        self.max_step = h;
        self
    }

    pub fn without_record(mut self) -> Self {
        self.record = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::InvalidParameter(
                "rtol and atol must be positive".into(),
            ));
        }
        if !(self.event_tol > 0.0 && self.event_tol <= self.rtol) {
            return Err(Error::InvalidParameter(
                "event_tol must lie in (0, rtol]".into(),
            ));
        }
        if !(self.max_step > 0.0) || !(self.max_time > 0.0) {
            return Err(Error::InvalidParameter(
                "max_step and max_time must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Sign change direction of an event function in forward physical time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    fn flip(self) -> Self {
        match self {
            Direction::Up => Direction::Down,
            Direction::Down => Direction::Up,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeDirection {
    Forward,
    Backward,
}

impl TimeDirection {
    pub fn sign(self) -> f64 {
        match self {
            TimeDirection::Forward => 1.0,
            TimeDirection::Backward => -1.0,
        }
    }
}

type StateFn<'a, const N: usize, T> = Box<dyn Fn(&[f64; N]) -> T + Send + Sync + 'a>;

/// A zero of `g` along the solution. Crossings rejected by `filter` are
/// skipped; `terminal` events stop the integration.
pub struct Event<'a, const N: usize> {
    pub id: usize,
    pub g: StateFn<'a, N, f64>,
    pub direction: Option<Direction>,
    pub filter: Option<StateFn<'a, N, bool>>,
    pub terminal: bool,
    pub detect_graze: bool,
}

impl<'a, const N: usize> Event<'a, N> {
    pub fn new(id: usize, g: impl Fn(&[f64; N]) -> f64 + Send + Sync + 'a) -> Self {
        Event {
            id,
            g: Box::new(g),
            direction: None,
            filter: None,
            terminal: true,
            detect_graze: false,
        }
    }

    pub fn direction(mut self, d: Option<Direction>) -> Self {
        self.direction = d;
        self
    }

    pub fn filter(mut self, f: impl Fn(&[f64; N]) -> bool + Send + Sync + 'a) -> Self {
        self.filter = Some(Box::new(f));
        self
    }

    /// Records the crossing without stopping.
    pub fn mark(mut self) -> Self {
        self.terminal = false;
        self
    }

    pub fn graze(mut self) -> Self {
        self.detect_graze = true;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit<const N: usize> {
    pub t: f64,
    pub y: [f64; N],
    pub id: usize,
    pub direction: Direction,
}

#[derive(Clone, Debug)]
pub struct Solution<const N: usize> {
    pub t: f64,
    pub y: [f64; N],
    pub samples: Vec<(f64, [f64; N])>,
    pub hits: Vec<Hit<N>>,
    /// Index into `hits` of the event that stopped the integration.
    pub stopped_by: Option<usize>,
    pub steps: usize,
}

impl<const N: usize> Solution<N> {
    pub fn terminal_hit(&self) -> Option<&Hit<N>> {
        self.stopped_by.map(|i| &self.hits[i])
    }
}

#[inline]
fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        let hc = h * c;
        for i in 0..N {
            out[i] += hc * k[i];
        }
    }
    out
}

/// One Dormand–Prince step with its embedded error estimate and the stage
/// data needed for dense output.
struct Step<const N: usize> {
    y1: [f64; N],
    k1: [f64; N],
    k7: [f64; N],
    err: [f64; N],
    cont5: [f64; N],
}

fn dp_step<const N: usize, F>(f: &F, y: &[f64; N], k1: &[f64; N], h: f64, dense: bool) -> Step<N>
where
    F: Fn(&[f64; N]) -> [f64; N],
{
    let k2 = f(&axpy(y, h, &[(A21, k1)]));
    let k3 = f(&axpy(y, h, &[(A31, k1), (A32, &k2)]));
    let k4 = f(&axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]));
    let k5 = f(&axpy(
        y,
        h,
        &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)],
    ));
    let k6 = f(&axpy(
        y,
        h,
        &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
    ));
    let y1 = axpy(
        y,
        h,
        &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
    );
    let k7 = f(&y1);
    let mut err = [0.0; N];
    let mut cont5 = [0.0; N];
    for i in 0..N {
        err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        if dense {
            cont5[i] =
                h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
        }
    }
    Step {
        y1,
        k1: *k1,
        k7,
        err,
        cont5,
    }
}

/// Quartic interpolant over one accepted step.
#[derive(Clone, Copy, Debug)]
pub struct DenseStep<const N: usize> {
    pub t0: f64,
    pub h: f64,
    pub y0: [f64; N],
    r: [[f64; N]; 5],
}

impl<const N: usize> DenseStep<N> {
    fn new(t0: f64, h: f64, y0: &[f64; N], s: &Step<N>) -> Self {
        let mut r = [[0.0; N]; 5];
        for i in 0..N {
            let ydiff = s.y1[i] - y0[i];
            let bspl = h * s.k1[i] - ydiff;
            r[0][i] = y0[i];
            r[1][i] = ydiff;
            r[2][i] = bspl;
            r[3][i] = ydiff - h * s.k7[i] - bspl;
            r[4][i] = s.cont5[i];
        }
        DenseStep { t0, h, y0: *y0, r }
    }

    /// State at fraction θ ∈ [0, 1] of the step.
    pub fn at(&self, theta: f64) -> [f64; N] {
        let t1 = 1.0 - theta;
        let mut out = [0.0; N];
        for i in 0..N {
            out[i] = self.r[0][i]
                + theta
                    * (self.r[1][i]
                        + t1 * (self.r[2][i] + theta * (self.r[3][i] + t1 * self.r[4][i])));
        }
        out
    }
}

fn error_norm<const N: usize>(s: &Step<N>, y0: &[f64; N], cfg: &IntegratorConfig) -> f64 {
    let mut acc = 0.0;
    for i in 0..N {
        let sk = cfg.atol + cfg.rtol * y0[i].abs().max(s.y1[i].abs());
        acc += (s.err[i] / sk).powi(2);
    }
    (acc / N as f64).sqrt()
}

fn initial_step<const N: usize, F>(
    f: &F,
    y0: &[f64; N],
    f0: &[f64; N],
    dir: f64,
    hmax: f64,
    cfg: &IntegratorConfig,
) -> f64
where
    F: Fn(&[f64; N]) -> [f64; N],
{
    let mut dnf = 0.0;
    let mut dny = 0.0;
    for i in 0..N {
        let sk = cfg.atol + cfg.rtol * y0[i].abs();
        dnf += (f0[i] / sk).powi(2);
        dny += (y0[i] / sk).powi(2);
    }
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6
    } else {
        (dny / dnf).sqrt() * 0.01
    };
    h = h.min(hmax);
    let y1 = axpy(y0, dir * h, &[(1.0, f0)]);
    let f1 = f(&y1);
    let mut der2 = 0.0;
    for i in 0..N {
        let sk = cfg.atol + cfg.rtol * y0[i].abs();
        der2 += ((f1[i] - f0[i]) / sk).powi(2);
    }
    let der2 = der2.sqrt() / h;
    let der12 = der2.max(dnf.sqrt());
    let h1 = if der12 <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / der12).powf(0.2)
    };
    (100.0 * h).min(h1).min(hmax)
}

struct EventState {
    armed: bool,
    prev: f64,
    /// Last three armed samples (t, |g|) for graze checks.
    window: [(f64, f64); 3],
    filled: usize,
}

/// Bisection on the interpolant followed by secant polishing with true
/// Runge–Kutta steps from the start of the step.
fn refine<const N: usize, F>(
    f: &F,
    d: &DenseStep<N>,
    k1: &[f64; N],
    g: &dyn Fn(&[f64; N]) -> f64,
    mut a: f64,
    mut b: f64,
    tol: f64,
) -> (f64, [f64; N])
where
    F: Fn(&[f64; N]) -> [f64; N],
{
    let mut ga = g(&d.at(a));
    for _ in 0..200 {
        if (b - a) * d.h.abs() <= tol * 1e-3 || b - a <= 4.0 * f64::EPSILON {
            break;
        }
        let m = 0.5 * (a + b);
        let gm = g(&d.at(m));
        if gm == 0.0 {
            a = m;
            b = m;
            break;
        }
        if (gm > 0.0) == (ga > 0.0) {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
    }
    let theta = 0.5 * (a + b);
    let true_state = |th: f64| -> [f64; N] {
        if th == 0.0 {
            d.y0
        } else {
            dp_step(f, &d.y0, k1, th * d.h, false).y1
        }
    };
    let mut best = (theta, true_state(theta));
    let mut best_g = g(&best.1).abs();
    if best_g <= tol * 1e-2 {
        return (d.t0 + theta * d.h, best.1);
    }
    let mut t0 = theta;
    let mut g0 = g(&best.1);
    let mut t1 = theta + (1e-7_f64).max(b - a);
    let mut g1 = g(&true_state(t1));
    for _ in 0..8 {
        if g1 == g0 {
            break;
        }
        let t2 = t1 - g1 * (t1 - t0) / (g1 - g0);
        if !t2.is_finite() || !(-0.5..=1.5).contains(&t2) {
            break;
        }
        let s2 = true_state(t2);
        let g2 = g(&s2);
        if g2.abs() < best_g {
            best_g = g2.abs();
            best = (t2, s2);
        }
        if best_g <= tol * 1e-2 {
            break;
        }
        t0 = t1;
        g0 = g1;
        t1 = t2;
        g1 = g2;
    }
    (d.t0 + best.0 * d.h, best.1)
}

/// Integrates the autonomous system `y' = f(y)` from `(t0, y0)` towards `t_end`
/// (either direction), locating events on the way.
pub fn integrate<const N: usize, F>(
    f: F,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    cfg: &IntegratorConfig,
    events: &[Event<'_, N>],
    window: Option<Rect>,
) -> Result<Solution<N>>
where
    F: Fn(&[f64; N]) -> [f64; N],
{
    cfg.validate()?;
    let inside = |y: &[f64; N]| window.is_none_or(|w| N < 2 || w.contains([y[0], y[1]]));
    if !inside(&y0) || y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::DomainExit {
            x: y0[0],
            y: y0.get(1).copied().unwrap_or(0.0),
        });
    }
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    let span = (t_end - t0).abs();
    let mut sol = Solution {
        t: t0,
        y: y0,
        samples: if cfg.record {
            vec![(t0, y0)]
        } else {
            Vec::new()
        },
        hits: Vec::new(),
        stopped_by: None,
        steps: 0,
    };
    if span == 0.0 {
        return Ok(sol);
    }
    let hmax = cfg.max_step.min(span);
    let mut states: Vec<EventState> = events
        .iter()
        .map(|e| {
            let g0 = (e.g)(&y0);
            EventState {
                armed: g0.abs() > cfg.event_tol,
                prev: g0,
                window: [(t0, g0.abs()); 3],
                filled: usize::from(g0.abs() > cfg.event_tol),
            }
        })
        .collect();

    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(&y);
    let mut h = initial_step(&f, &y, &k1, dir, hmax, cfg);
    let mut facold: f64 = 1e-4;
    let mut last_rejected = false;
    let expo1 = 0.2 - BETA * 0.75;
    let mut n_steps = 0usize;
    let mut prev_dense: Option<DenseStep<N>> = None;

    loop {
        if n_steps >= cfg.max_steps {
            return Err(Error::TooManySteps { steps: n_steps, t });
        }
        let remaining = (t_end - t).abs();
        let mut last = false;
        if h >= remaining * (1.0 - 1e-12) {
            h = remaining;
            last = true;
        }
        if h.abs() <= 10.0 * f64::EPSILON * t.abs().max(1e-3) {
            return Err(Error::StepSizeUnderflow { t });
        }
        let step = dp_step(&f, &y, &k1, dir * h, true);
        n_steps += 1;
        let err = error_norm(&step, &y, cfg);
        if !err.is_finite() {
            h *= FAC_MIN;
            last_rejected = true;
            continue;
        }
        let fac11 = err.powf(expo1);
        if err <= 1.0 {
            let mut fac = fac11 / facold.powf(BETA);
            fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut hnew = h / fac;
            facold = err.max(1e-4);
            if last_rejected {
                hnew = hnew.min(h);
            }
            last_rejected = false;

            let t_new = if last { t_end } else { t + dir * h };
            let dense = DenseStep::new(t, dir * h, &y, &step);
            let found = scan_events(
                &f,
                &dense,
                prev_dense.as_ref(),
                &k1,
                events,
                &mut states,
                cfg,
                &mut sol,
            )?;
            prev_dense = Some(dense);
            if let Some(stop) = found {
                sol.t = stop.0;
                sol.y = stop.1;
                if cfg.record {
                    sol.samples.push(stop);
                }
                sol.steps = n_steps;
                return Ok(sol);
            }
            if !inside(&step.y1) || step.y1.iter().any(|v| !v.is_finite()) {
                return Err(Error::DomainExit {
                    x: step.y1[0],
                    y: step.y1.get(1).copied().unwrap_or(0.0),
                });
            }
            t = t_new;
            y = step.y1;
            k1 = step.k7;
            if cfg.record {
                sol.samples.push((t, y));
            }
            if last {
                sol.t = t;
                sol.y = y;
                sol.steps = n_steps;
                return Ok(sol);
            }
            h = hnew.min(hmax);
        } else {
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
            last_rejected = true;
        }
    }
}

/// Golden-section minimum of |g| between two sample times, which may
/// straddle the previous and current steps.
fn min_abs_on<const N: usize>(
    d: &DenseStep<N>,
    prev: Option<&DenseStep<N>>,
    g: &dyn Fn(&[f64; N]) -> f64,
    ta: f64,
    tb: f64,
) -> (f64, [f64; N], f64) {
    let state = |t: f64| -> [f64; N] {
        let th = (t - d.t0) / d.h;
        match prev {
            Some(p) if th < 0.0 => p.at(((t - p.t0) / p.h).clamp(0.0, 1.0)),
            _ => d.at(th.clamp(0.0, 1.0)),
        }
    };
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (ta, tb);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let mut f1 = g(&state(x1)).abs();
    let mut f2 = g(&state(x2)).abs();
    for _ in 0..80 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = g(&state(x1)).abs();
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = g(&state(x2)).abs();
        }
    }
    let tm = 0.5 * (a + b);
    let ym = state(tm);
    (tm, ym, g(&ym).abs())
}

type Stop<const N: usize> = Option<(f64, [f64; N])>;

fn scan_events<const N: usize, F>(
    f: &F,
    d: &DenseStep<N>,
    prev: Option<&DenseStep<N>>,
    k1: &[f64; N],
    events: &[Event<'_, N>],
    states: &mut [EventState],
    cfg: &IntegratorConfig,
    sol: &mut Solution<N>,
) -> Result<Stop<N>>
where
    F: Fn(&[f64; N]) -> [f64; N],
{
    if events.is_empty() {
        return Ok(None);
    }
    let backward = d.h < 0.0;
    let thetas: Vec<f64> = (1..=EVENT_SAMPLES)
        .map(|i| i as f64 / EVENT_SAMPLES as f64)
        .collect();
    let pts: Vec<[f64; N]> = thetas.iter().map(|&th| d.at(th)).collect();
    // Candidate hits within this step, ordered by θ.
    let mut found: Vec<(f64, usize, Hit<N>)> = Vec::new();
    let mut graze: Option<(f64, Error)> = None;
    for (ei, ev) in events.iter().enumerate() {
        let st = &mut states[ei];
        let mut prev_theta = 0.0;
        for (j, &th) in thetas.iter().enumerate() {
            let gv = (ev.g)(&pts[j]);
            if !st.armed {
                if gv.abs() > cfg.event_tol {
                    st.armed = true;
                    st.prev = gv;
                    st.window = [
                        (d.t0, f64::INFINITY),
                        (d.t0, f64::INFINITY),
                        (d.t0 + th * d.h, gv.abs()),
                    ];
                    st.filled = 1;
                }
                prev_theta = th;
                continue;
            }
            if (st.prev > 0.0) != (gv > 0.0) || gv == 0.0 {
                let traversal = if st.prev < 0.0 {
                    Direction::Up
                } else {
                    Direction::Down
                };
                let physical = if backward {
                    traversal.flip()
                } else {
                    traversal
                };
                st.armed = false;
                st.prev = gv;
                st.filled = 0;
                if ev.direction.is_some_and(|want| want != physical) {
                    prev_theta = th;
                    continue;
                }
                let (tt, yy) = refine(f, d, k1, ev.g.as_ref(), prev_theta, th, cfg.event_tol);
                if ev.filter.as_ref().is_some_and(|flt| !flt(&yy)) {
                    prev_theta = th;
                    continue;
                }
                let theta_hit = (tt - d.t0) / d.h;
                found.push((
                    theta_hit,
                    ei,
                    Hit {
                        t: tt,
                        y: yy,
                        id: ev.id,
                        direction: physical,
                    },
                ));
                if ev.terminal {
                    break;
                }
            } else {
                st.prev = gv;
                if ev.detect_graze {
                    st.window = [st.window[1], st.window[2], (d.t0 + th * d.h, gv.abs())];
                    st.filled += 1;
                    let [a, b, c] = st.window;
                    if st.filled >= 3 && b.1 <= a.1 && b.1 <= c.1 {
                        let (tm, ym, gmin) = min_abs_on(d, prev, ev.g.as_ref(), a.0, c.0);
                        if gmin < cfg.event_tol.sqrt()
                            && graze.as_ref().is_none_or(|(g, _)| th < *g)
                        {
                            graze = Some((
                                th,
                                Error::TangentialGraze {
                                    t: tm,
                                    x: ym[0],
                                    y: ym.get(1).copied().unwrap_or(0.0),
                                },
                            ));
                        }
                    }
                }
            }
            prev_theta = th;
        }
    }
    found.sort_by(|a, b| a.0.total_cmp(&b.0));
    let graze_theta = graze.as_ref().map(|g| g.0).unwrap_or(f64::INFINITY);
    for (theta, ei, hit) in found {
        if theta > graze_theta {
            break;
        }
        sol.hits.push(hit);
        if events[ei].terminal {
            sol.stopped_by = Some(sol.hits.len() - 1);
            return Ok(Some((hit.t, hit.y)));
        }
    }
    if let Some((_, e)) = graze {
        return Err(e);
    }
    Ok(None)
}

/// Vertical (x = c) or horizontal (y = c) section.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SectionKind {
    Vertical,
    Horizontal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SectionSpec {
    pub id: usize,
    pub kind: SectionKind,
    pub c: f64,
    /// Admissible range of the free coordinate.
    pub interval: (f64, f64),
    pub direction: Option<Direction>,
}

impl SectionSpec {
    pub fn vertical(c: f64) -> Self {
        SectionSpec {
            id: 0,
            kind: SectionKind::Vertical,
            c,
            interval: (f64::NEG_INFINITY, f64::INFINITY),
            direction: None,
        }
    }

    pub fn horizontal(c: f64) -> Self {
        SectionSpec {
            kind: SectionKind::Horizontal,
            ..SectionSpec::vertical(c)
        }
    }

    pub fn with_interval(mut self, lo: f64, hi: f64) -> Self {
        self.interval = (lo, hi);
        self
    }

    pub fn with_direction(mut self, d: Direction) -> Self {
        self.direction = Some(d);
        self
    }

    pub fn with_id(mut self, id: usize) -> Self {
        self.id = id;
        self
    }

    pub fn residual(&self, p: Point) -> f64 {
        match self.kind {
            SectionKind::Vertical => p[0] - self.c,
            SectionKind::Horizontal => p[1] - self.c,
        }
    }

    /// Free coordinate of a point on the section.
    pub fn coordinate(&self, p: Point) -> f64 {
        match self.kind {
            SectionKind::Vertical => p[1],
            SectionKind::Horizontal => p[0],
        }
    }

    pub fn admits(&self, p: Point) -> bool {
        let s = self.coordinate(p);
        s >= self.interval.0 && s <= self.interval.1
    }

    pub fn validate(&self) -> Result<()> {
        if self.interval.0 < self.interval.1 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(
                "section interval is degenerate".into(),
            ))
        }
    }

    pub fn event<'a>(&self) -> Event<'a, 2> {
        let s = *self;
        Event::new(self.id, move |p: &[f64; 2]| s.residual(*p))
            .direction(self.direction)
            .filter(move |p: &[f64; 2]| s.admits(*p))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EventHit {
    pub t: f64,
    pub point: Point,
    pub section_id: usize,
    pub direction: Direction,
}

impl From<Hit<2>> for EventHit {
    fn from(h: Hit<2>) -> Self {
        EventHit {
            t: h.t,
            point: h.y,
            section_id: h.id,
            direction: h.direction,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<(f64, Point)>,
    pub events: Vec<EventHit>,
}

impl Trajectory {
    pub fn from_solution(sol: &Solution<2>) -> Self {
        Trajectory {
            samples: sol.samples.clone(),
            events: sol.hits.iter().map(|&h| h.into()).collect(),
        }
    }

    pub fn end(&self) -> Option<Point> {
        self.samples.last().map(|s| s.1)
    }

    pub fn points(&self) -> Vec<Point> {
        self.samples.iter().map(|s| s.1).collect()
    }

    /// Appends `other`, dropping its first sample when it repeats our last one.
    pub fn extend(&mut self, other: Trajectory) {
        let skip = match (self.samples.last(), other.samples.first()) {
            (Some(a), Some(b)) => usize::from(a == b),
            _ => 0,
        };
        self.samples.extend(other.samples.into_iter().skip(skip));
        self.events.extend(other.events);
    }

    /// `t,x,y,event` rows; event rows carry the section id.
    pub fn to_table(&self) -> Table {
        let mut rows: Vec<(f64, Vec<String>)> = self
            .samples
            .iter()
            .map(|(t, p)| (*t, vec![fmt17(*t), fmt17(p[0]), fmt17(p[1]), String::new()]))
            .collect();
        for e in &self.events {
            rows.push((
                e.t,
                vec![
                    fmt17(e.t),
                    fmt17(e.point[0]),
                    fmt17(e.point[1]),
                    e.section_id.to_string(),
                ],
            ));
        }
        let forward = self.samples.len() < 2 || self.samples[1].0 >= self.samples[0].0;
        rows.sort_by(|a, b| {
            if forward {
                a.0.total_cmp(&b.0)
            } else {
                b.0.total_cmp(&a.0)
            }
        });
        let mut t = Table::new(&["t", "x", "y", "event"]);
        for (_, r) in rows {
            t.push(r);
        }
        t
    }
}

/// Flow of a planar field over `t_span`.
pub fn flow(
    field: &PlanarField,
    p0: Point,
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let dom = field.domain();
    if !dom.contains(p0) {
        return Err(Error::Domain { x: p0[0], y: p0[1] });
    }
    let window = (dom != Rect::PLANE).then_some(dom);
    let sol = integrate(
        |p: &[f64; 2]| field.eval(*p),
        t_span.0,
        p0,
        t_span.1,
        cfg,
        &[],
        window,
    )?;
    Ok(Trajectory::from_solution(&sol))
}

/// Integrates until the first admissible crossing of `section`, within
/// `cfg.max_time`, and returns the refined hit.
pub fn flow_to_section(
    field: &PlanarField,
    p0: Point,
    section: &SectionSpec,
    cfg: &IntegratorConfig,
    t_direction: TimeDirection,
) -> Result<EventHit> {
    section.validate()?;
    let dom = field.domain();
    if !dom.contains(p0) {
        return Err(Error::Domain { x: p0[0], y: p0[1] });
    }
    let window = (dom != Rect::PLANE).then_some(dom);
    let ev = [section.event().graze()];
    let cfg = IntegratorConfig {
        record: false,
        ..cfg.clone()
    };
    let sol = integrate(
        |p: &[f64; 2]| field.eval(*p),
        0.0,
        p0,
        t_direction.sign() * cfg.max_time,
        &cfg,
        &ev,
        window,
    )?;
    sol.terminal_hit()
        .map(|&h| h.into())
        .ok_or(Error::NoCrossing)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn shear() -> PlanarField {
        PlanarField::from_fn(|p| [1.0, p[0]])
    }

    #[test]
    fn closed_form_flows() {
        let cfg = IntegratorConfig::default();
        let tr = flow(&shear(), [0.0, 0.0], (0.0, 1.0), &cfg).unwrap();
        let e = tr.end().unwrap();
        assert_abs_diff_eq!(e[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(e[1], 0.5, epsilon = 1e-9);
        let cubic = PlanarField::from_fn(|p| [1.0, p[0].powi(3)]);
        let e = flow(&cubic, [0.0, 0.0], (0.0, 1.0), &cfg)
            .unwrap()
            .end()
            .unwrap();
        assert_abs_diff_eq!(e[1], 0.25, epsilon = 1e-9);
        let zero = PlanarField::constant([0.0, 0.0]);
        let tr = flow(&zero, [0.3, -0.2], (0.0, 5.0), &cfg).unwrap();
        assert!(tr.samples.iter().all(|s| s.1 == [0.3, -0.2]));
    }

    #[test]
    fn dense_output_matches_exponential() {
        let f = |y: &[f64; 1]| [-y[0]];
        let cfg = IntegratorConfig::default();
        let ev = [Event::new(7, |y: &[f64; 1]| y[0] - 0.5)];
        let sol = integrate(f, 0.0, [1.0], 10.0, &cfg, &ev, None).unwrap();
        let hit = sol.terminal_hit().unwrap();
        assert_abs_diff_eq!(hit.t, 2f64.ln(), epsilon = 1e-10);
        assert_eq!(hit.direction, Direction::Down);
        assert!((hit.y[0] - 0.5).abs() <= cfg.event_tol);
    }

    #[test]
    fn section_hits_of_canonical_field() {
        let eps = 1e-2;
        let xp = PlanarField::from_fn(|p| [1.0, p[0]]);
        let cfg = IntegratorConfig::default();
        let hit = flow_to_section(
            &xp,
            [0.0, 0.0],
            &SectionSpec::horizontal(eps),
            &cfg,
            TimeDirection::Forward,
        )
        .unwrap();
        assert_abs_diff_eq!(hit.point[0], (2.0 * eps).sqrt(), epsilon = 1e-8);
        assert!((hit.point[1] - eps).abs() <= cfg.event_tol);
        let hit = flow_to_section(
            &xp,
            [0.0, 0.0],
            &SectionSpec::vertical(-0.3),
            &cfg,
            TimeDirection::Backward,
        )
        .unwrap();
        assert_abs_diff_eq!(hit.point[1], 0.045, epsilon = 1e-12);
        assert_eq!(hit.direction, Direction::Up);
        let up = PlanarField::constant([0.0, 1.0]);
        let hit = flow_to_section(
            &up,
            [0.0, -eps],
            &SectionSpec::horizontal(0.0),
            &cfg,
            TimeDirection::Forward,
        )
        .unwrap();
        assert_abs_diff_eq!(hit.point[1], 0.0, epsilon = 1e-14);
        assert_eq!(hit.point[0], 0.0);
    }

    #[test]
    fn grazing_is_reported() {
        // y = t²/2 − 1/2 touches y = −1/2 at t = 0 from above.
        let xp = PlanarField::from_fn(|p| [1.0, p[0]]);
        let cfg = IntegratorConfig::default().with_max_time(3.0);
        let r = flow_to_section(
            &xp,
            [-1.0, 0.0],
            &SectionSpec::horizontal(-0.5),
            &cfg,
            TimeDirection::Forward,
        );
        assert!(matches!(r, Err(Error::TangentialGraze { .. })), "{r:?}");
        let r = flow_to_section(
            &xp,
            [-1.0, 0.0],
            &SectionSpec::horizontal(-2.0),
            &cfg,
            TimeDirection::Forward,
        );
        assert_eq!(r, Err(Error::NoCrossing));
    }

    #[test]
    fn filters_and_marks() {
        let f = |y: &[f64; 2]| [1.0, (y[0]).cos()];
        let cfg = IntegratorConfig::default();
        // y = sin x crosses 0 at π (down) and 2π (up).
        let ev = [
            Event::new(1, |y: &[f64; 2]| y[1]).direction(Some(Direction::Up)),
            Event::new(2, |y: &[f64; 2]| y[1] - 0.5).mark(),
        ];
        let sol = integrate(f, 0.0, [0.0, 0.0], 10.0, &cfg, &ev, None).unwrap();
        let hit = sol.terminal_hit().unwrap();
        assert_abs_diff_eq!(hit.y[0], 2.0 * std::f64::consts::PI, epsilon = 1e-9);
        let marks: Vec<_> = sol.hits.iter().filter(|h| h.id == 2).collect();
        assert_eq!(marks.len(), 2);
        assert_abs_diff_eq!(marks[0].y[0], std::f64::consts::FRAC_PI_6, epsilon = 1e-9);
        // Backward the filter still refers to forward time: −π is a downward
        // crossing, so the first admissible one is at −2π.
        let sol = integrate(f, 0.0, [0.0, 0.0], -10.0, &cfg, &ev[..1], None).unwrap();
        let hit = sol.terminal_hit().unwrap();
        assert_abs_diff_eq!(hit.y[0], -2.0 * std::f64::consts::PI, epsilon = 1e-9);
        assert_eq!(hit.direction, Direction::Up);
    }

    #[test]
    fn time_reversal_returns() {
        let rot = PlanarField::from_fn(|p| [-p[1] + 0.1 * p[0], p[0]]);
        let cfg = IntegratorConfig::default();
        let p = [0.7, -0.2];
        let a = flow(&rot, p, (0.0, 3.0), &cfg).unwrap().end().unwrap();
        let b = flow(&rot, a, (3.0, 0.0), &cfg).unwrap().end().unwrap();
        let scale = (p[0] * p[0] + p[1] * p[1]).sqrt();
        assert!((b[0] - p[0]).hypot(b[1] - p[1]) <= 10.0 * cfg.rtol * scale.max(1.0));
    }

    #[test]
    fn error_decreases_with_tolerance() {
        let f = |y: &[f64; 2]| [y[1], -y[0]];
        let errs: Vec<f64> = [1e-4, 1e-6, 1e-8]
            .iter()
            .map(|&tol| {
                let cfg = IntegratorConfig::default().with_tolerances(tol, tol * 1e-2);
                let cfg = IntegratorConfig {
                    event_tol: tol * 1e-2,
                    ..cfg
                };
                let s = integrate(f, 0.0, [1.0, 0.0], 10.0, &cfg, &[], None).unwrap();
                (s.y[0] - 10f64.cos())
                    .abs()
                    .max((s.y[1] + 10f64.sin()).abs())
            })
            .collect();
        assert!(
            errs[1] < errs[0] / 10.0 && errs[2] < errs[1] / 10.0,
            "{errs:?}"
        );
    }

    #[test]
    fn trajectory_csv_has_event_rows() {
        let xp = PlanarField::from_fn(|p| [1.0, p[0]]);
        let cfg = IntegratorConfig::default();
        let ev = [SectionSpec::vertical(0.5).with_id(3).event().mark()];
        let sol = integrate(
            |p: &[f64; 2]| xp.eval(*p),
            0.0,
            [0.0, 0.0],
            1.0,
            &cfg,
            &ev,
            None,
        )
        .unwrap();
        let tr = Trajectory::from_solution(&sol);
        let text = tr.to_table().render();
        assert!(text.starts_with("t,x,y,event\n"));
        assert_eq!(text.lines().filter(|l| l.ends_with(",3")).count(), 1);
    }

    #[test]
    fn window_exit_is_an_error() {
        let up = PlanarField::constant([0.0, 1.0]).with_domain(Rect::new((-1.0, 1.0), (-1.0, 1.0)));
        let r = flow(&up, [0.0, 0.0], (0.0, 5.0), &IntegratorConfig::default());
        assert!(matches!(r, Err(Error::DomainExit { .. })));
        assert!(matches!(
            flow(&up, [2.0, 0.0], (0.0, 1.0), &IntegratorConfig::default()),
            Err(Error::Domain { .. })
        ));
    }
}

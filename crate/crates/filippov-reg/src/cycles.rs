//! Return maps on {x = −ρ}, fixed points and multipliers of the
//! regularized boundary cycle, Hausdorff distances, and the grazing
//! half-maps next to the tangency curve.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{FilippovSystem, PlanarField, Point, Rect, TransitionFunction};
use crate::integrate::{
    flow_to_section, integrate, Direction, Event, IntegratorConfig, SectionSpec, TimeDirection,
};
use crate::regularize::{hybrid_flow, HybridOptions, HybridOutcome, RegularizedField, Target};
use crate::transition::{self, line_fit, TransitionConfig};

/// X⁺ orbit from (θ, y) around the outer loop to {x = −ρ}.
pub fn exterior_map(x_plus: &PlanarField, theta: f64, rho: f64, y: f64) -> Result<f64> {
    exterior_detail(x_plus, theta, rho, y).map(|e| e.0)
}

/// Exterior map value and log of its derivative (Liouville).
pub fn exterior_detail(x_plus: &PlanarField, theta: f64, rho: f64, y: f64) -> Result<(f64, f64)> {
    let ev = [Event::new(0, move |p: &[f64; 3]| p[0] + rho).direction(Some(Direction::Up))];
    let cfg = IntegratorConfig {
        record: false,
        max_time: 200.0,
        ..IntegratorConfig::default()
    };
    let rhs = |p: &[f64; 3]| {
        let q = [p[0], p[1]];
        let v = x_plus.eval(q);
        [v[0], v[1], x_plus.divergence(q)]
    };
    let window = Some(Rect::new((-10.0, 10.0), (-10.0, 10.0)));
    let sol = match integrate(rhs, 0.0, [theta, y, 0.0], cfg.max_time, &cfg, &ev, window) {
        Ok(s) => s,
        Err(Error::DomainExit { x, y }) => return Err(Error::LeftWindow { x, y }),
        Err(e) => return Err(e),
    };
    let hit = sol.terminal_hit().ok_or(Error::NoCrossing)?;
    let (p0, p1) = ([theta, y], [hit.y[0], hit.y[1]]);
    let log_d = hit.y[2] + x_plus.eval(p0)[0].abs().ln() - x_plus.eval(p1)[0].abs().ln();
    Ok((hit.y[1], log_d))
}

/// log K_{θ,ρ}: log-derivative of the exterior map at ȳ_θ.
pub fn exterior_log_slope(
    x_plus: &PlanarField,
    theta: f64,
    rho: f64,
    ybar_theta: f64,
) -> Result<f64> {
    exterior_detail(x_plus, theta, rho, ybar_theta).map(|e| e.1)
}

#[derive(Clone, Debug)]
pub struct ReturnMapConfig {
    pub z: FilippovSystem,
    pub phi: TransitionFunction,
    pub eps: f64,
    pub rho: f64,
    /// Intermediate section of the composed mode.
    pub theta: f64,
    pub bracket: (f64, f64),
    pub window: Rect,
    pub max_time: f64,
    pub cfg: IntegratorConfig,
}

impl ReturnMapConfig {
    /// Section {x = −0.6}; bracket from just above the band to 0.2 above
    /// the X⁺ orbit through the origin.
    pub fn new(z: FilippovSystem, phi: TransitionFunction, eps: f64) -> Result<Self> {
        let mut c = ReturnMapConfig {
            z,
            phi,
            eps,
            rho: 0.6,
            theta: 0.2,
            bracket: (0.0, 0.0),
            window: Rect::new((-3.0, 3.0), (-1.0, 4.0)),
            max_time: 100.0,
            cfg: IntegratorConfig {
                record: false,
                ..IntegratorConfig::default()
            },
        };
        c.bracket = (1.01 * eps, c.ybar_section()? + 0.2);
        Ok(c)
    }

    pub fn with_rho(mut self, rho: f64) -> Result<Self> {
        self.rho = rho;
        self.bracket = (1.01 * self.eps, self.ybar_section()? + 0.2);
        Ok(self)
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        let mut c = self.clone();
        c.eps = eps;
        c.bracket = (1.01 * eps, self.ybar_section()? + 0.2);
        Ok(c)
    }

    pub fn regularized(&self) -> Result<RegularizedField> {
        RegularizedField::new(self.z.clone(), self.phi.clone(), self.eps)
    }

    /// ȳ_{−ρ}: the X⁺ orbit through the origin on the section.
    pub fn ybar_section(&self) -> Result<f64> {
        let cfg = IntegratorConfig {
            record: false,
            max_time: 50.0,
            ..IntegratorConfig::default()
        };
        transition::outer_value(&self.z.x_plus, [0.0, 0.0], -self.rho, &cfg)
    }

    pub fn section(&self) -> SectionSpec {
        SectionSpec::vertical(-self.rho)
            .with_interval(self.eps, f64::INFINITY)
            .with_direction(Direction::Up)
    }

    fn options(&self, record: bool) -> HybridOptions {
        HybridOptions {
            cfg: IntegratorConfig {
                record,
                ..self.cfg.clone()
            },
            window: self.window,
            max_time: self.max_time,
            ..HybridOptions::default()
        }
    }

    fn transition(&self) -> Result<TransitionConfig> {
        let mut t = TransitionConfig::new(self.z.clone(), self.phi.clone(), self.eps)?
            .with_rho_theta(self.rho, self.theta);
        t.window = self.window;
        Ok(t)
    }
}

/// One return of the regularized flow to the section.
#[derive(Clone, Debug)]
pub struct Return {
    pub input: f64,
    pub output: f64,
    pub time: f64,
    /// log π' from Liouville's formula.
    pub log_derivative: f64,
    pub outcome: HybridOutcome,
}

fn run_return(cfg: &ReturnMapConfig, y: f64, record: bool) -> Result<Return> {
    let rf = cfg.regularized()?;
    let p0 = [-cfg.rho, y];
    let out = hybrid_flow(
        &rf,
        p0,
        Some(Target::Section(cfg.section())),
        &cfg.options(record),
    )
    .map_err(|e| match e {
        Error::NoCrossing | Error::LeftWindow { .. } => Error::NoReturn,
        other => other,
    })?;
    let hit = out.hit.ok_or(Error::NoReturn)?;
    let z0 = rf.eval(p0);
    let z1 = rf.eval(hit.point);
    Ok(Return {
        input: y,
        output: hit.point[1],
        time: out.t,
        log_derivative: out.log_jacobian + z0[0].abs().ln() - z1[0].abs().ln(),
        outcome: out,
    })
}

/// π_ε(y) by direct integration of the regularized field.
pub fn return_map(cfg: &ReturnMapConfig, y: f64) -> Result<f64> {
    run_return(cfg, y, false).map(|r| r.output)
}

pub fn return_detail(cfg: &ReturnMapConfig, y: f64) -> Result<Return> {
    run_return(cfg, y, false)
}

/// π_ε(y) as the exterior map after the upper transition map; valid for
/// inputs in the upper-map window [ε, y^ε_{ρ,λ}].
pub fn return_map_composed(cfg: &ReturnMapConfig, y: f64) -> Result<f64> {
    let t = cfg.transition()?;
    let u = transition::upper_transition_map(&t, y)?;
    exterior_map(&cfg.z.x_plus, cfg.theta, cfg.rho, u.output)
}

/// Upper-map input window on the section.
pub fn upper_window(cfg: &ReturnMapConfig) -> Result<(f64, f64)> {
    transition::input_interval(&cfg.transition()?, transition::MapSide::Upper)
}

#[derive(Clone, Debug, Serialize)]
pub struct CycleResult {
    pub fixed_point: f64,
    pub period: f64,
    /// Central difference of π_ε.
    pub multiplier: f64,
    /// exp(log π') from Liouville's formula at the fixed point.
    pub multiplier_liouville: f64,
    /// Size of a difference quotient produced by round-off alone; a
    /// |multiplier| below it only bounds the true value.
    pub resolution: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(skip)]
    pub cycle_samples: Vec<Point>,
}

/// Fixed point of y ↦ f(y) on [lo, hi] by Illinois regula falsi; falls
/// back to plain iteration when f does not change sign but contracts.
pub fn fixed_point<F: Fn(f64) -> Result<f64>>(f: F, lo: f64, hi: f64) -> Result<(f64, usize)> {
    const MAX_ITER: usize = 100;
    let tol = |y: f64| 1e-10 * y.abs().max(1.0);
    let (mut a, mut b) = (lo, hi);
    let (pa, pb) = (f(a)?, f(b)?);
    let (mut fa, mut fb) = (pa - a, pb - b);
    if fa == 0.0 {
        return Ok((a, 0));
    }
    if fb == 0.0 {
        return Ok((b, 0));
    }
    if fa * fb > 0.0 {
        if (pb - pa).abs() < (b - a).abs() {
            let mut y = pb;
            for it in 1..=MAX_ITER {
                let next = f(y)?;
                if (next - y).abs() <= tol(y) {
                    return Ok((next, it));
                }
                y = next;
            }
            return Err(Error::NotConverged {
                iterations: MAX_ITER,
            });
        }
        return Err(Error::NoBracket { lo, hi });
    }
    let mut side = 0i8;
    for it in 1..=MAX_ITER {
        let c = (a * fb - b * fa) / (fb - fa);
        let fc = f(c)? - c;
        if fc.abs() <= tol(c) || (b - a).abs() <= 1e-11 * c.abs().max(1.0) {
            return Ok((c, it));
        }
        if fc * fb > 0.0 {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    Err(Error::NotConverged {
        iterations: MAX_ITER,
    })
}

pub fn find_cycle(cfg: &ReturnMapConfig) -> Result<CycleResult> {
    find_cycle_in(cfg, cfg.bracket)
}

pub fn find_cycle_in(cfg: &ReturnMapConfig, bracket: (f64, f64)) -> Result<CycleResult> {
    let (y, iterations) = fixed_point(|y| return_map(cfg, y), bracket.0, bracket.1)?;
    let closing = run_return(cfg, y, true)?;
    let h = 1e-6 * (bracket.1 - bracket.0);
    let a = return_map(cfg, y - h)?;
    let b = return_map(cfg, y + h)?;
    let noise = cfg.cfg.rtol * y.abs() + cfg.cfg.atol + cfg.cfg.event_tol;
    Ok(CycleResult {
        fixed_point: y,
        period: closing.time,
        multiplier: (b - a) / (2.0 * h),
        multiplier_liouville: closing.log_derivative.exp(),
        resolution: noise / h,
        iterations,
        converged: true,
        cycle_samples: closing.outcome.trajectory.points(),
    })
}

/// Period of Γ: one X⁺ revolution from (0, 2) back to {x = 0} at y > 1.
pub fn boundary_cycle_period(x_plus: &PlanarField) -> Result<f64> {
    let ev = [Event::new(0, |p: &[f64; 2]| p[0])
        .direction(Some(Direction::Down))
        .filter(|p: &[f64; 2]| p[1] > 1.0)];
    let cfg = IntegratorConfig {
        record: false,
        rtol: 1e-12,
        atol: 1e-14,
        ..IntegratorConfig::default()
    };
    let sol = integrate(|p| x_plus.eval(*p), 0.0, [0.0, 2.0], 100.0, &cfg, &ev, None)?;
    sol.terminal_hit().map(|h| h.t).ok_or(Error::NoReturn)
}

/// Inserts points so that no segment is longer than `delta`.
pub fn densify(poly: &[Point], delta: f64) -> Vec<Point> {
    let mut out = Vec::with_capacity(poly.len());
    for w in poly.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = (b[0] - a[0]).hypot(b[1] - a[1]);
        let m = (len / delta).ceil().max(1.0) as usize;
        for i in 0..m {
            let s = i as f64 / m as f64;
            out.push([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]);
        }
    }
    if let Some(&last) = poly.last() {
        out.push(last);
    }
    out
}

fn seg_dist(p: Point, a: Point, b: Point) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let l2 = d[0] * d[0] + d[1] * d[1];
    let s = if l2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / l2).clamp(0.0, 1.0)
    };
    (p[0] - a[0] - s * d[0]).hypot(p[1] - a[1] - s * d[1])
}

fn directed(a: &[Point], b: &[Point]) -> f64 {
    a.par_iter()
        .map(|&p| {
            if b.len() == 1 {
                return (p[0] - b[0][0]).hypot(p[1] - b[0][1]);
            }
            b.windows(2)
                .map(|w| seg_dist(p, w[0], w[1]))
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| 0.0, f64::max)
}

/// Symmetric Hausdorff distance between two polylines, densified to
/// spacing 1e−3 and measured against segments.
pub fn hausdorff_distance(a: &[Point], b: &[Point]) -> f64 {
    hausdorff_with(a, b, 1e-3)
}

pub fn hausdorff_with(a: &[Point], b: &[Point], delta: f64) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "polylines must be nonempty");
    let (da, db) = (densify(a, delta), densify(b, delta));
    directed(&da, &db).max(directed(&db, &da))
}

/// `{eps, fixed_point, period, multiplier, hausdorff, hausdorff_over_eps}`.
#[derive(Clone, Debug, Serialize)]
pub struct CycleReport {
    pub eps: f64,
    pub fixed_point: f64,
    pub period: f64,
    /// Liouville multiplier.
    pub multiplier: f64,
    /// Central difference; only a bound when below `resolution`.
    pub multiplier_difference: f64,
    pub resolution: f64,
    pub hausdorff: f64,
    pub hausdorff_over_eps: f64,
}

impl CycleReport {
    pub fn new(eps: f64, c: &CycleResult, reference: &[Point]) -> Self {
        let d = hausdorff_distance(&c.cycle_samples, reference);
        CycleReport {
            eps,
            fixed_point: c.fixed_point,
            period: c.period,
            multiplier: c.multiplier_liouville,
            multiplier_difference: c.multiplier,
            resolution: c.resolution,
            hausdorff: d,
            hausdorff_over_eps: d / eps,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum HalfMap {
    /// T^u: forward to {x = x_ε}.
    Upper,
    /// T^s: backward to {x = −ρ}.
    Lower,
}

/// Section value of the X⁺ half-orbit from (x, ε) to {x = target}.
pub fn grazing_half_return(
    z: &FilippovSystem,
    eps: f64,
    side: HalfMap,
    x: f64,
    target: f64,
) -> Result<f64> {
    let cfg = IntegratorConfig {
        record: false,
        rtol: 1e-12,
        atol: 1e-15,
        max_time: 50.0,
        ..IntegratorConfig::default()
    };
    let dir = match side {
        HalfMap::Upper => TimeDirection::Forward,
        HalfMap::Lower => TimeDirection::Backward,
    };
    Ok(flow_to_section(
        &z.x_plus,
        [x, eps],
        &SectionSpec::vertical(target),
        &cfg,
        dir,
    )?
    .point[1])
}

#[derive(Clone, Debug, Serialize)]
pub struct GrazingFit {
    pub side: HalfMap,
    pub eps: f64,
    pub psi: f64,
    pub target: f64,
    /// T(ψ).
    pub extremal: f64,
    /// Slope of log|T(ψ+u) − T(ψ)| against log|u|.
    pub exponent: f64,
    /// Leading coefficient of T(ψ+u) − T(ψ) = κu^{2k} + c u^{2k+1}.
    pub kappa: f64,
}

/// Local fit of a half-map on |u| ∈ [0.05, 0.5]·(x_ε − ψ), u > 0 for T^u
/// and u < 0 for T^s, with target x_ε or −ρ.
pub fn grazing_fit(cfg: &TransitionConfig, side: HalfMap, points: usize) -> Result<GrazingFit> {
    let psi = transition::tangency_curve_psi(cfg, cfg.eps)?;
    let x_eps = transition::find_x_epsilon(cfg)?;
    if !(x_eps > psi) {
        return Err(Error::ConditionViolated(format!(
            "x_eps = {x_eps} not beyond psi = {psi}"
        )));
    }
    let (target, sign) = match side {
        HalfMap::Upper => (x_eps, 1.0),
        HalfMap::Lower => (-cfg.rho, -1.0),
    };
    let t0 = grazing_half_return(&cfg.z, cfg.eps, side, psi, target)?;
    let w = x_eps - psi;
    let us: Vec<f64> = transition::eps_grid(0.05 * w, 0.5 * w, points.max(4));
    let ds: Vec<f64> = us
        .par_iter()
        .map(|&u| {
            grazing_half_return(&cfg.z, cfg.eps, side, psi + sign * u, target).map(|t| t - t0)
        })
        .collect::<Result<_>>()?;
    if let Some(&d) = ds.iter().find(|d| **d == 0.0) {
        return Err(Error::NonPositiveQuantity { value: d });
    }
    let lx: Vec<f64> = us.iter().map(|u| u.ln()).collect();
    let ly: Vec<f64> = ds.iter().map(|d| d.abs().ln()).collect();
    let exponent = line_fit(&lx, &ly)?.slope;
    let p = 2 * cfg.k as i32;
    let a = nalgebra::DMatrix::from_fn(us.len(), 2, |i, j| (sign * us[i]).powi(p + j as i32));
    let b = nalgebra::DVector::from_vec(ds);
    let sol = a
        .svd(true, true)
        .solve(&b, 1e-300)
        .map_err(|e| Error::ConditionViolated(e.to_string()))?;
    Ok(GrazingFit {
        side,
        eps: cfg.eps,
        psi,
        target,
        extremal: t0,
        exponent,
        kappa: sol[0],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{phi_family, CanonicalForm};
    use crate::scenarios::{boundary_cycle_example, cycle_points};
    use approx::assert_abs_diff_eq;

    #[test]
    fn linear_map_fixed_point() {
        let (y, _) = fixed_point(|y| Ok(0.5 * y + 0.1), 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(y, 0.2, epsilon = 1e-10);
        // No sign change but contracting: iteration.
        let (y, _) = fixed_point(|y| Ok(0.5 * y + 0.1), 0.5, 1.0).unwrap();
        assert_abs_diff_eq!(y, 0.2, epsilon = 1e-9);
        assert!(matches!(
            fixed_point(|y| Ok(2.0 * y + 1.0), 0.0, 1.0),
            Err(Error::NoBracket { .. })
        ));
    }

    #[test]
    fn hausdorff_circles() {
        let circle = |r: f64, n: usize| -> Vec<Point> {
            (0..=n)
                .map(|i| {
                    let t = std::f64::consts::TAU * i as f64 / n as f64;
                    [r * t.cos(), r * t.sin()]
                })
                .collect()
        };
        let a = circle(1.0, 10_000);
        assert_eq!(hausdorff_distance(&a, &a), 0.0);
        let d = hausdorff_distance(&a, &circle(1.05, 10_000));
        assert!((d - 0.05).abs() < 1e-3, "{d}");
    }

    #[test]
    fn period_and_exterior_map() {
        let z = boundary_cycle_example(2).unwrap();
        let t = boundary_cycle_period(&z.x_plus).unwrap();
        assert!(t > 1.0 && t < 20.0, "{t}");
        let (theta, rho) = (0.2, 0.2);
        let yb = |x: f64| 1.0 - (1.0 - x.powi(4)).powf(0.25);
        let y = exterior_map(&z.x_plus, theta, rho, yb(theta)).unwrap();
        assert_abs_diff_eq!(y, yb(-rho), epsilon = 1e-8);
        // K_{θ,ρ} → e^{−4T}; the missing arc near the origin has div ≈ −4.
        let lk = exterior_log_slope(&z.x_plus, 0.01, 0.01, yb(0.01)).unwrap();
        assert!((lk + 4.0 * t).abs() < 0.2, "{lk} {}", -4.0 * t);
        let lk = exterior_log_slope(&z.x_plus, theta, rho, yb(theta)).unwrap();
        assert!(lk < 0.0);
    }

    #[test]
    fn cycle_found_and_stable() {
        let z = boundary_cycle_example(2).unwrap();
        let cfg = ReturnMapConfig::new(z, phi_family(5).unwrap(), 0.02).unwrap();
        let c = find_cycle(&cfg).unwrap();
        assert!(
            c.multiplier_liouville > 0.0 && c.multiplier_liouville < 1.0,
            "{c:?}"
        );
        assert!(c.multiplier.abs() < 1.0);
        let r = (return_map(&cfg, c.fixed_point).unwrap() - c.fixed_point).abs();
        assert!(r < 1e-9, "{r}");
        let d = hausdorff_distance(&c.cycle_samples, &cycle_points(2, 20_000));
        assert!(d < 3.0 * cfg.eps, "{d}");
    }

    #[test]
    fn grazing_exponent_k1() {
        let z = CanonicalForm::with_constant_theta(1, 1.0, -1.0)
            .unwrap()
            .system();
        let mut t = TransitionConfig::new(z, phi_family(1).unwrap(), 1e-5).unwrap();
        let x_eps = transition::find_x_epsilon(&t).unwrap();
        t.rho = x_eps;
        let u = grazing_fit(&t, HalfMap::Upper, 12).unwrap();
        let s = grazing_fit(&t, HalfMap::Lower, 12).unwrap();
        assert!((u.exponent - 2.0).abs() < 0.05, "{u:?}");
        assert!((s.exponent - 2.0).abs() < 0.05, "{s:?}");
        assert!(u.kappa < 0.0 && s.kappa < 0.0);
        assert!((u.kappa / s.kappa - 1.0).abs() < 0.05, "{u:?} {s:?}");
    }
}

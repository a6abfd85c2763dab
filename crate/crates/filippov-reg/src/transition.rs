//! Upper and lower transition maps, the exit point x_ε of the Fenichel
//! manifold, the tangency curve ψ(ε), the mirror map and scaling fits.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{FilippovSystem, PlanarField, Point, Rect, TransitionFunction};
use crate::integrate::{
    flow_to_section, Direction, Event, IntegratorConfig, SectionSpec, TimeDirection,
};
use crate::regularize::{
    hybrid_flow, HybridOptions, HybridOutcome, Region, RegularizedField, Target,
};
use crate::report::{fmt17, Table};

/// λ* = n / (1 + 2k(n−1)).
pub fn lambda_star(k: u32, n: usize) -> f64 {
    n as f64 / (1.0 + 2.0 * k as f64 * (n as f64 - 1.0))
}

#[derive(Clone, Debug)]
pub struct TransitionConfig {
    pub k: u32,
    pub theorem_n: usize,
    pub alpha: f64,
    pub rho: f64,
    pub theta: f64,
    pub lambda: f64,
    pub eps: f64,
    pub phi: TransitionFunction,
    pub z: FilippovSystem,
    /// Start abscissa −L of the Fenichel manifold.
    pub l: f64,
    /// Intermediate band level of the lower map.
    pub y_hat0: f64,
    pub window: Rect,
    pub cfg: IntegratorConfig,
}

impl TransitionConfig {
    /// Defaults ρ = θ = 0.3, λ = λ*/2, L from the regularized field.
    pub fn new(z: FilippovSystem, phi: TransitionFunction, eps: f64) -> Result<Self> {
        let k = z
            .x_plus
            .param("k")
            .ok_or_else(|| Error::InvalidParameter("X+ carries no parameter k".into()))?
            as u32;
        let alpha = z
            .x_plus
            .param("alpha")
            .ok_or_else(|| Error::InvalidParameter("X+ carries no parameter alpha".into()))?;
        let theorem_n = phi.theorem_n();
        let rf = RegularizedField::new(z.clone(), phi.clone(), eps)?;
        let l = rf.default_l()?;
        Ok(TransitionConfig {
            k,
            theorem_n,
            alpha,
            rho: 0.3,
            theta: 0.3,
            lambda: 0.5 * lambda_star(k, theorem_n),
            eps,
            phi,
            z,
            l,
            y_hat0: 0.9,
            window: Rect::new((-1.0, 1.0), (-1.0, 1.0)),
            cfg: IntegratorConfig::default(),
        })
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        TransitionConfig {
            eps,
            ..self.clone()
        }
    }

    pub fn with_rho_theta(mut self, rho: f64, theta: f64) -> Self {
        self.rho = rho;
        self.theta = theta;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn lambda_star(&self) -> f64 {
        lambda_star(self.k, self.theorem_n)
    }

    /// q = 1 − λ/λ*.
    pub fn q(&self) -> f64 {
        1.0 - self.lambda / self.lambda_star()
    }

    pub fn regularized(&self) -> Result<RegularizedField> {
        RegularizedField::new(self.z.clone(), self.phi.clone(), self.eps)
    }

    pub fn validate(&self) -> Result<()> {
        let lo = 2.max(2 * self.k as usize - 1);
        if self.theorem_n < lo {
            return Err(Error::InvalidParameter(format!(
                "n = {} must be at least {lo}",
                self.theorem_n
            )));
        }
        if !(self.lambda > 0.0 && self.lambda < self.lambda_star()) {
            return Err(Error::InvalidParameter(format!(
                "lambda = {} must lie in (0, {})",
                self.lambda,
                self.lambda_star()
            )));
        }
        if !(self.eps.powf(self.lambda) < self.rho) {
            return Err(Error::InvalidParameter(
                "eps^lambda must be below rho".into(),
            ));
        }
        if !(self.theta > 0.0 && self.y_hat0 > 0.0 && self.y_hat0 < 1.0) {
            return Err(Error::InvalidParameter(
                "theta > 0 and y_hat0 in (0, 1) required".into(),
            ));
        }
        Ok(())
    }

    fn hybrid_options(&self) -> HybridOptions {
        HybridOptions {
            cfg: IntegratorConfig {
                record: false,
                ..self.cfg.clone()
            },
            window: self.window,
            max_time: 200.0,
            ..HybridOptions::default()
        }
    }

    fn outer_cfg(&self) -> IntegratorConfig {
        IntegratorConfig {
            record: false,
            max_time: 50.0,
            ..self.cfg.clone()
        }
    }
}

/// Exit abscissa of the Fenichel manifold: the fast system is started on
/// (−L, m0(−L)) and followed until ŷ = 1.
pub fn find_x_epsilon(cfg: &TransitionConfig) -> Result<f64> {
    x_epsilon_from(cfg, cfg.l)
}

pub fn x_epsilon_from(cfg: &TransitionConfig, l: f64) -> Result<f64> {
    let rf = cfg.regularized()?;
    let fs = rf.fast_system()?;
    let cm = rf.critical_manifold(l)?;
    let start = [-l, cm.m0(-l)?];
    let ic = IntegratorConfig {
        record: false,
        max_steps: 50_000_000,
        ..cfg.cfg.clone()
    };
    let ev = [Event::new(0, |s: &[f64; 2]| s[1] - 1.0).direction(Some(Direction::Up))];
    let tau_max = 40.0 * l / cfg.eps + 1e4;
    let sol = fs.solve(start, tau_max, &ic, &ev)?;
    sol.terminal_hit().map(|h| h.y[0]).ok_or(Error::NoExit)
}

/// Root of X⁺₂(x, ε) near the origin.
pub fn tangency_curve_psi(cfg: &TransitionConfig, eps: f64) -> Result<f64> {
    psi_of(&cfg.z.x_plus, cfg.k, eps)
}

pub fn psi_of(x_plus: &PlanarField, k: u32, eps: f64) -> Result<f64> {
    let f = |x: f64| x_plus.eval([x, eps])[1];
    if f(0.0) == 0.0 {
        return Ok(0.0);
    }
    let b = (10.0 * eps).powf(1.0 / (2.0 * k as f64 - 1.0));
    let (mut lo, mut hi) = (-b, b);
    let (mut flo, fhi) = (f(lo), f(hi));
    if flo * fhi > 0.0 {
        return Err(Error::NoRoot { lo, hi });
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// y-coordinate on {x = c} of the X⁺ orbit through `p`.
pub fn outer_value(x_plus: &PlanarField, p: Point, c: f64, cfg: &IntegratorConfig) -> Result<f64> {
    if p[0] == c {
        return Ok(p[1]);
    }
    let dir = if c > p[0] {
        TimeDirection::Forward
    } else {
        TimeDirection::Backward
    };
    let sec = SectionSpec::vertical(c);
    let cfg = IntegratorConfig {
        record: false,
        ..cfg.clone()
    };
    Ok(flow_to_section(x_plus, p, &sec, &cfg, dir)?.point[1])
}

/// ȳ_x: the orbit of X⁺ through the tangency point, evaluated at x.
pub fn ybar(cfg: &TransitionConfig, x: f64) -> Result<f64> {
    outer_value(&cfg.z.x_plus, [0.0, 0.0], x, &cfg.outer_cfg())
}

/// x̄⁺_ε: abscissa in (0, θ] where ȳ_x = ε.
pub fn xbar_plus(cfg: &TransitionConfig) -> Result<f64> {
    let f = |x: f64| ybar(cfg, x).map(|y| y - cfg.eps);
    let (mut lo, mut hi) = (0.0, cfg.theta);
    if f(hi)? <= 0.0 {
        return Err(Error::NoRoot { lo, hi });
    }
    while hi - lo > 1e-15 * hi.max(1e-300) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid)? > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// y^ε_{ρ,λ}: backward X⁺ orbit of (−ε^λ, ε) on {x = −ρ}.
pub fn y_rho_lambda(cfg: &TransitionConfig) -> Result<f64> {
    outer_value(
        &cfg.z.x_plus,
        [-cfg.eps.powf(cfg.lambda), cfg.eps],
        -cfg.rho,
        &cfg.outer_cfg(),
    )
}

#[derive(Clone, Debug, Serialize)]
pub struct Targets {
    pub x_eps: f64,
    pub ybar_theta: f64,
    pub ybar_minus_rho: f64,
    /// ȳ_θ + ε − (α/2k)x_ε^{2k}.
    pub y_theta: f64,
    /// ȳ_{−ρ} + ε + β̂ε^{2kλ}.
    pub y_rho_lambda: f64,
    pub beta_hat: f64,
}

/// Leading-order section targets; β̂ is fitted from y^ε_{ρ,λ} at
/// ε·{1, 1/2, 1/4, 1/8, 1/16} with the model β ε^{2kλ} + c ε.
pub fn predicted_targets(cfg: &TransitionConfig) -> Result<Targets> {
    let x_eps = find_x_epsilon(cfg)?;
    let ybar_theta = ybar(cfg, cfg.theta)?;
    let ybar_minus_rho = ybar(cfg, -cfg.rho)?;
    let two_k = 2.0 * cfg.k as f64;
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for j in 0..5 {
        let e = cfg.eps / f64::from(1u32 << j);
        let c = cfg.with_eps(e);
        let d = y_rho_lambda(&c)? - ybar_minus_rho - e;
        rows.push([e.powf(two_k * cfg.lambda), e]);
        rhs.push(d);
    }
    let a = nalgebra::DMatrix::from_fn(5, 2, |i, j| rows[i][j]);
    let b = nalgebra::DVector::from_vec(rhs);
    let sol = a
        .svd(true, true)
        .solve(&b, 1e-300)
        .map_err(|e| Error::ConditionViolated(e.to_string()))?;
    let beta_hat = sol[0];
    Ok(Targets {
        x_eps,
        ybar_theta,
        ybar_minus_rho,
        y_theta: ybar_theta + cfg.eps - cfg.alpha / two_k * x_eps.powf(two_k),
        y_rho_lambda: ybar_minus_rho + cfg.eps + beta_hat * cfg.eps.powf(two_k * cfg.lambda),
        beta_hat,
    })
}

/// One evaluation of a transition map.
#[derive(Clone, Debug, Serialize)]
pub struct MapSample {
    pub input: f64,
    pub output: f64,
    /// log |d output / d input| from Liouville's formula.
    pub log_derivative: f64,
    /// Abscissae of the crossings of y = ε before the target.
    pub top_crossings: Vec<f64>,
    pub time: f64,
}

fn cross(v: Point, tangent: Point) -> f64 {
    v[0] * tangent[1] - v[1] * tangent[0]
}

/// log|dU/ds| between sections with unit tangents `t0`, `t1`:
/// ∫div dt + log|Z(p0)×t0| − log|Z(p1)×t1|.
pub fn liouville_log_derivative(
    rf: &RegularizedField,
    out: &HybridOutcome,
    p0: Point,
    t0: Point,
    t1: Point,
) -> f64 {
    let z0 = rf.eval(p0);
    let z1 = rf.eval(out.end);
    out.log_jacobian + cross(z0, t0).abs().ln() - cross(z1, t1).abs().ln()
}

fn top_crossings(out: &HybridOutcome) -> Vec<f64> {
    out.crossings
        .iter()
        .filter(|c| {
            matches!(
                (c.from, c.to),
                (Region::Upper, Region::Band) | (Region::Band, Region::Upper)
            )
        })
        .map(|c| c.point[0])
        .collect()
}

/// U_ε: from (−ρ, y) to {x = θ} above the band.
pub fn upper_transition_map(cfg: &TransitionConfig, y: f64) -> Result<MapSample> {
    let rf = cfg.regularized()?;
    let p0 = [-cfg.rho, y];
    if !(y >= cfg.eps) {
        return Err(Error::OutOfRange {
            value: y,
            range: "[eps, y_rho_lambda]",
        });
    }
    let target = SectionSpec::vertical(cfg.theta)
        .with_interval(cfg.eps, f64::INFINITY)
        .with_direction(Direction::Up);
    let out = hybrid_flow(
        &rf,
        p0,
        Some(Target::Section(target)),
        &cfg.hybrid_options(),
    )
    .map_err(no_return)?;
    let hit = out.hit.ok_or(Error::NoReturn)?;
    Ok(MapSample {
        input: y,
        output: hit.point[1],
        log_derivative: liouville_log_derivative(&rf, &out, p0, [0.0, 1.0], [0.0, 1.0]),
        top_crossings: top_crossings(&out),
        time: out.t,
    })
}

/// L_ε: from (x, −ε) to {x = θ} above the band.
pub fn lower_transition_map(cfg: &TransitionConfig, x: f64) -> Result<MapSample> {
    let rf = cfg.regularized()?;
    let p0 = [x, -cfg.eps];
    let target = SectionSpec::vertical(cfg.theta)
        .with_interval(cfg.eps, f64::INFINITY)
        .with_direction(Direction::Up);
    let out = hybrid_flow(
        &rf,
        p0,
        Some(Target::Section(target)),
        &cfg.hybrid_options(),
    )
    .map_err(no_return)?;
    if let Some(c) = out.crossings.iter().find(|c| c.to == Region::Lower) {
        return Err(Error::SlidingCapture { x: c.point[0] });
    }
    let hit = out.hit.ok_or(Error::NoReturn)?;
    Ok(MapSample {
        input: x,
        output: hit.point[1],
        log_derivative: liouville_log_derivative(&rf, &out, p0, [1.0, 0.0], [0.0, 1.0]),
        top_crossings: top_crossings(&out),
        time: out.t,
    })
}

fn no_return(e: Error) -> Error {
    match e {
        Error::NoCrossing => Error::NoReturn,
        other => other,
    }
}

/// The lower-map leg from (x, −ε) to the level ŷ = ŷ₀ inside the band;
/// returns the abscissa reached.
pub fn lower_ascent(cfg: &TransitionConfig, x: f64) -> Result<f64> {
    let rf = cfg.regularized()?;
    let level = SectionSpec::horizontal(cfg.y_hat0 * cfg.eps).with_direction(Direction::Up);
    let out = hybrid_flow(
        &rf,
        [x, -cfg.eps],
        Some(Target::Section(level)),
        &cfg.hybrid_options(),
    )?;
    Ok(out.end[0])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MapSide {
    Upper,
    Lower,
}

/// Input interval of a map: [ε, y^ε_{ρ,λ}] (upper) or [−ρ, −ε^λ] (lower).
pub fn input_interval(cfg: &TransitionConfig, side: MapSide) -> Result<(f64, f64)> {
    cfg.validate()?;
    Ok(match side {
        MapSide::Upper => (cfg.eps, y_rho_lambda(cfg)?),
        MapSide::Lower => (-cfg.rho, -cfg.eps.powf(cfg.lambda)),
    })
}

/// Evaluates a map on `points` equally spaced inputs (in parallel).
pub fn map_sweep(cfg: &TransitionConfig, side: MapSide, points: usize) -> Result<Vec<MapSample>> {
    let (a, b) = input_interval(cfg, side)?;
    let points = points.max(2);
    (0..points)
        .into_par_iter()
        .map(|i| {
            let s = a + (b - a) * i as f64 / (points - 1) as f64;
            match side {
                MapSide::Upper => upper_transition_map(cfg, s),
                MapSide::Lower => lower_transition_map(cfg, s),
            }
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct Contraction {
    pub eps: f64,
    pub input_length: f64,
    /// |map(b) − map(a)|, limited by round-off.
    pub direct: f64,
    /// ∫ |map'| over the inputs, from the Liouville derivatives.
    pub liouville: f64,
    pub max_log_derivative: f64,
}

pub fn contraction(cfg: &TransitionConfig, side: MapSide, points: usize) -> Result<Contraction> {
    let samples = map_sweep(cfg, side, points)?;
    let a = samples[0].input;
    let b = samples[samples.len() - 1].input;
    let ds = (b - a) / (samples.len() - 1) as f64;
    let mut integral = 0.0;
    for w in samples.windows(2) {
        integral += 0.5 * ds * (w[0].log_derivative.exp() + w[1].log_derivative.exp());
    }
    let outs: Vec<f64> = samples.iter().map(|s| s.output).collect();
    let direct = outs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - outs.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(Contraction {
        eps: cfg.eps,
        input_length: (b - a).abs(),
        direct,
        liouville: integral.abs(),
        max_log_derivative: samples
            .iter()
            .map(|s| s.log_derivative)
            .fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Return abscissa to {y = ε} of the orbit from (x, ε), x ≤ ψ(ε).
pub fn mirror_map(cfg: &TransitionConfig, x: f64) -> Result<f64> {
    let rf = cfg.regularized()?;
    let psi = tangency_curve_psi(cfg, cfg.eps)?;
    if x > psi {
        return Err(Error::OutOfRange {
            value: x,
            range: "(psi - delta, psi]",
        });
    }
    if x == psi || cfg.z.x_plus.eval([x, cfg.eps])[1] >= 0.0 {
        return Ok(x);
    }
    let mut opts = cfg.hybrid_options();
    opts.max_switches = 2;
    let out =
        hybrid_flow(&rf, [x, cfg.eps], Some(Target::BandTop), &opts).map_err(|e| match e {
            Error::MaxRevolutions(_) | Error::NoCrossing => Error::NoReturn,
            other => other,
        })?;
    if out.crossings.iter().any(|c| c.to == Region::Lower) {
        return Err(Error::NoReturn);
    }
    Ok(out.end[0])
}

#[derive(Clone, Debug, Serialize)]
pub struct MirrorFit {
    pub eps: f64,
    pub psi: f64,
    pub delta: f64,
    /// Coefficients of ρ_ε(ψ+u) − ψ = a1·u + a2·u².
    pub a1: f64,
    pub a2: f64,
    /// |ρ_ε(ψ) − ψ|.
    pub fixed_point_residual: f64,
}

/// Fits the mirror map on u ∈ [−δ, −δ/20] with δ = 0.2(0.1kε/α)^{1/2k}.
/// Wider windows let the X⁻ share inside the band bend the linear term.
pub fn mirror_fit(cfg: &TransitionConfig, points: usize) -> Result<MirrorFit> {
    let psi = tangency_curve_psi(cfg, cfg.eps)?;
    let delta = 0.2 * (0.1 * cfg.k as f64 * cfg.eps / cfg.alpha).powf(0.5 / cfg.k as f64);
    let points = points.max(3);
    let us: Vec<f64> = (0..points)
        .map(|i| -delta + (delta - delta / 20.0) * i as f64 / (points - 1) as f64)
        .collect();
    let outs: Vec<f64> = us
        .par_iter()
        .map(|&u| mirror_map(cfg, psi + u).map(|r| r - psi))
        .collect::<Result<_>>()?;
    let a = nalgebra::DMatrix::from_fn(points, 2, |i, j| us[i].powi(j as i32 + 1));
    let b = nalgebra::DVector::from_vec(outs);
    let sol = a
        .svd(true, true)
        .solve(&b, 1e-300)
        .map_err(|e| Error::ConditionViolated(e.to_string()))?;
    let fixed = mirror_map(cfg, psi)?;
    Ok(MirrorFit {
        eps: cfg.eps,
        psi,
        delta,
        a1: sol[0],
        a2: sol[1],
        fixed_point_residual: (fixed - psi).abs(),
    })
}

/// Least-squares line with r².
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn line_fit(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InsufficientData(
            "need at least two paired values".into(),
        ));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    Ok(LineFit {
        slope,
        intercept,
        r2,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub predicted: f64,
    pub rel_dev: f64,
    #[serde(skip)]
    pub samples: Vec<(f64, f64)>,
}

impl ScalingFit {
    /// `{slope, intercept, r2, predicted, rel_dev}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "slope": self.slope,
            "intercept": self.intercept,
            "r2": self.r2,
            "predicted": self.predicted,
            "rel_dev": self.rel_dev,
        })
    }

    /// exp(intercept): the prefactor of the power law.
    pub fn prefactor(&self) -> f64 {
        self.intercept.exp()
    }
}

/// OLS of log quantity against log ε; needs ≥ 6 values of ε spanning at
/// least two decades.
pub fn fit_scaling(pairs: &[(f64, f64)], predicted_exponent: f64) -> Result<ScalingFit> {
    if let Some(&(_, q)) = pairs.iter().find(|p| !(p.1 > 0.0) || !(p.0 > 0.0)) {
        return Err(Error::NonPositiveQuantity { value: q });
    }
    if pairs.len() < 6 {
        return Err(Error::InsufficientData(format!(
            "{} values of eps, at least 6 needed",
            pairs.len()
        )));
    }
    let lo = pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = pairs.iter().map(|p| p.0).fold(0.0, f64::max);
    if hi / lo < 100.0 * (1.0 - 1e-12) {
        return Err(Error::InsufficientData(
            "eps values span less than two decades".into(),
        ));
    }
    let samples: Vec<(f64, f64)> = pairs.iter().map(|p| (p.0.ln(), p.1.ln())).collect();
    let xs: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let f = line_fit(&xs, &ys)?;
    Ok(ScalingFit {
        slope: f.slope,
        intercept: f.intercept,
        r2: f.r2,
        predicted: predicted_exponent,
        rel_dev: ((f.slope - predicted_exponent) / predicted_exponent).abs(),
        samples,
    })
}

/// Log-spaced grid of `points` values from `lo` to `hi`.
pub fn eps_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingRow {
    pub eps: f64,
    pub x_eps: f64,
    pub psi_eps: f64,
}

/// x_ε and ψ(ε) over a list of ε (parallel; rows sorted by ε).
pub fn scaling_sweep(cfg: &TransitionConfig, eps: &[f64]) -> Result<Vec<ScalingRow>> {
    let mut rows: Vec<ScalingRow> = eps
        .par_iter()
        .map(|&e| {
            let c = cfg.with_eps(e);
            Ok(ScalingRow {
                eps: e,
                x_eps: find_x_epsilon(&c)?,
                psi_eps: tangency_curve_psi(&c, e)?,
            })
        })
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| a.eps.total_cmp(&b.eps));
    Ok(rows)
}

pub fn scaling_table(rows: &[ScalingRow]) -> Table {
    let mut t = Table::new(&["eps", "x_eps", "psi_eps"]);
    for r in rows {
        t.push(vec![fmt17(r.eps), fmt17(r.x_eps), fmt17(r.psi_eps)]);
    }
    t
}

pub fn map_table(samples: &[MapSample]) -> Table {
    let mut t = Table::new(&["y_in", "y_out"]);
    for s in samples {
        t.push_f64(&[s.input, s.output]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{phi_family, CanonicalForm};
    use approx::assert_abs_diff_eq;

    fn cfg(k: u32, m: usize, eps: f64) -> TransitionConfig {
        let z = CanonicalForm::simple(k, 1.0).unwrap().system();
        TransitionConfig::new(z, phi_family(m).unwrap(), eps).unwrap()
    }

    #[test]
    fn lambda_star_values() {
        assert_abs_diff_eq!(lambda_star(1, 2), 2.0 / 3.0);
        assert_abs_diff_eq!(lambda_star(2, 6), 2.0 / 7.0);
        assert_abs_diff_eq!(lambda_star(2, 3), 1.0 / 3.0);
        let c = cfg(1, 1, 1e-3);
        c.validate().unwrap();
        assert_abs_diff_eq!(c.q(), 0.5);
        assert!(c.clone().with_lambda(0.7).validate().is_err());
    }

    #[test]
    fn psi_cases() {
        let c = cfg(2, 2, 1e-3);
        assert_eq!(tangency_curve_psi(&c, 1e-3).unwrap(), 0.0);
        let z = CanonicalForm::with_constant_theta(1, 1.0, -1.0)
            .unwrap()
            .system();
        let c = TransitionConfig::new(z, phi_family(1).unwrap(), 1e-3).unwrap();
        assert_abs_diff_eq!(tangency_curve_psi(&c, 1e-3).unwrap(), 1e-3, epsilon = 1e-18);
        let z = CanonicalForm::with_constant_theta(2, 1.0, -1.0)
            .unwrap()
            .system();
        let c = TransitionConfig::new(z, phi_family(2).unwrap(), 1e-3).unwrap();
        assert_abs_diff_eq!(tangency_curve_psi(&c, 1e-6).unwrap(), 1e-2, epsilon = 1e-16);
    }

    #[test]
    fn x_epsilon_is_positive_and_insensitive_to_l() {
        let c = cfg(1, 1, 1e-4);
        let a = find_x_epsilon(&c).unwrap();
        let b = x_epsilon_from(&c, 0.25).unwrap();
        assert!(a > 0.0 && a < 0.1, "{a}");
        assert!((a - b).abs() < 1e-9, "{a} {b}");
    }

    #[test]
    fn exact_case_targets() {
        let c = cfg(1, 1, 1e-3);
        let t = predicted_targets(&c).unwrap();
        assert_abs_diff_eq!(t.ybar_theta, 0.045, epsilon = 1e-12);
        assert_abs_diff_eq!(t.ybar_minus_rho, 0.045, epsilon = 1e-12);
        assert!(t.beta_hat < 0.0);
        assert_abs_diff_eq!(t.beta_hat, -0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(xbar_plus(&c).unwrap(), (2e-3f64).sqrt(), epsilon = 1e-10);
        let s = upper_transition_map(&c, 0.03).unwrap();
        assert_abs_diff_eq!(s.output, t.y_theta, epsilon = 1e-8);
        assert_eq!(s.top_crossings.len(), 2);
        assert!(s.top_crossings[0] <= -c.eps.powf(c.lambda) && s.top_crossings[0] >= -c.rho);
        let l = lower_transition_map(&c, -0.2).unwrap();
        assert_abs_diff_eq!(l.output, t.y_theta, epsilon = 1e-8);
        assert!(l.log_derivative < -10.0);
    }

    #[test]
    fn liouville_derivative_matches_finite_difference_where_resolvable() {
        // At ε = 0.05 the contraction is mild enough for a difference quotient.
        let c = cfg(1, 1, 0.05).with_lambda(0.1);
        let y = 0.06;
        let h = 1e-4;
        let a = upper_transition_map(&c, y - h).unwrap();
        let b = upper_transition_map(&c, y + h).unwrap();
        let m = upper_transition_map(&c, y).unwrap();
        let fd = (b.output - a.output) / (2.0 * h);
        assert!(
            (m.log_derivative - fd.ln()).abs() < 1e-3,
            "{} {}",
            m.log_derivative,
            fd.ln()
        );
    }

    #[test]
    fn lower_ascent_displacement() {
        // Small displacement needs m0(−ε^λ) above ŷ₀, hence a tiny ε.
        let c = cfg(1, 1, 1e-8);
        let x0 = -c.eps.powf(c.lambda);
        let x1 = lower_ascent(&c, x0).unwrap();
        assert!((x1 - x0).abs() < x0 * x0 + 10.0 * c.eps, "{x0} {x1}");
    }

    #[test]
    fn fit_scaling_exact_power_law() {
        let pairs: Vec<(f64, f64)> = eps_grid(1e-6, 1e-2, 9)
            .into_iter()
            .map(|e| (e, 3.0 * e.sqrt()))
            .collect();
        let f = fit_scaling(&pairs, 0.5).unwrap();
        assert_abs_diff_eq!(f.slope, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(f.intercept, 3f64.ln(), epsilon = 1e-10);
        assert_abs_diff_eq!(f.r2, 1.0, epsilon = 1e-12);
        assert!(matches!(
            fit_scaling(&pairs[..5], 0.5),
            Err(Error::InsufficientData(_))
        ));
        let narrow: Vec<(f64, f64)> = eps_grid(1e-3, 1e-2, 8)
            .into_iter()
            .map(|e| (e, e))
            .collect();
        assert!(matches!(
            fit_scaling(&narrow, 1.0),
            Err(Error::InsufficientData(_))
        ));
        let mut bad = pairs.clone();
        bad[2].1 = -1.0;
        assert!(matches!(
            fit_scaling(&bad, 0.5),
            Err(Error::NonPositiveQuantity { .. })
        ));
    }

    #[test]
    fn mirror_map_reflects() {
        let c = cfg(1, 1, 1e-3);
        let fit = mirror_fit(&c, 12).unwrap();
        assert_eq!(fit.fixed_point_residual, 0.0);
        assert!((fit.a1 + 1.0).abs() < 0.01, "{fit:?}");
    }
}

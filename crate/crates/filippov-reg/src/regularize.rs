//! Regularized fields, the fast (x, ŷ) system, hybrid integration across the
//! band |y| ≤ ε, and critical/slow manifold data.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{FilippovSystem, PlanarField, Point, Rect, TransitionFunction};
use crate::integrate::{
    integrate, Direction, Event, EventHit, Hit, IntegratorConfig, SectionSpec, TimeDirection,
    Trajectory,
};
use crate::report::{fmt17, Table};

/// Z_ε = (1+Φ(h/ε))/2·X⁺ + (1−Φ(h/ε))/2·X⁻.
#[derive(Clone, Debug)]
pub struct RegularizedField {
    base: FilippovSystem,
    phi: TransitionFunction,
    eps: f64,
    theorem_n: usize,
}

impl RegularizedField {
    pub fn new(base: FilippovSystem, phi: TransitionFunction, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "eps must be positive, got {eps}"
            )));
        }
        let theorem_n = phi.theorem_n();
        Ok(RegularizedField {
            base,
            phi,
            eps,
            theorem_n,
        })
    }

    pub fn base(&self) -> &FilippovSystem {
        &self.base
    }

    pub fn phi(&self) -> &TransitionFunction {
        &self.phi
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn theorem_n(&self) -> usize {
        self.theorem_n
    }

    /// Same system and profile at another ε.
    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        RegularizedField::new(self.base.clone(), self.phi.clone(), eps)
    }

    /// Integer parameter k of the contact (from the X⁺ parameters).
    pub fn k(&self) -> Result<u32> {
        self.base
            .x_plus
            .param("k")
            .map(|k| k as u32)
            .ok_or_else(|| Error::InvalidParameter("X+ carries no parameter k".into()))
    }

    pub fn alpha(&self) -> Result<f64> {
        self.base
            .x_plus
            .param("alpha")
            .ok_or_else(|| Error::InvalidParameter("X+ carries no parameter alpha".into()))
    }

    pub fn eval(&self, p: Point) -> Point {
        let s = self.base.h.eval(p) / self.eps;
        if s >= 1.0 {
            return self.base.x_plus.eval(p);
        }
        if s <= -1.0 {
            return self.base.x_minus.eval(p);
        }
        mix(
            &self.phi,
            s,
            self.base.x_plus.eval(p),
            self.base.x_minus.eval(p),
        )
    }

    /// Divergence of Z_ε in (x, y).
    pub fn divergence(&self, p: Point) -> f64 {
        let s = self.base.h.eval(p) / self.eps;
        if s >= 1.0 {
            return self.base.x_plus.divergence(p);
        }
        if s <= -1.0 {
            return self.base.x_minus.divergence(p);
        }
        let a = 0.5 * self.phi.one_plus(s);
        let b = 0.5 * self.phi.one_minus(s);
        let xp = self.base.x_plus.eval(p);
        let xm = self.base.x_minus.eval(p);
        let g = self.base.h.grad(p);
        let dphi = 0.5 * self.phi.big_phi_prime(s) / self.eps;
        a * self.base.x_plus.divergence(p)
            + b * self.base.x_minus.divergence(p)
            + dphi * (g[0] * (xp[0] - xm[0]) + g[1] * (xp[1] - xm[1]))
    }

    pub fn field(&self) -> PlanarField {
        let me = self.clone();
        PlanarField::from_fn(move |p| me.eval(p)).with_domain(self.base.domain())
    }

    pub fn region(&self, y: f64) -> Option<Region> {
        if y > self.eps {
            Some(Region::Upper)
        } else if y < -self.eps {
            Some(Region::Lower)
        } else if y.abs() < self.eps {
            Some(Region::Band)
        } else {
            None
        }
    }

    /// The (x, ŷ) system; needs h = y and X⁻ = (0, 1).
    pub fn fast_system(&self) -> Result<FastSystem> {
        if !self.base.h.is_horizontal() {
            return Err(Error::NotCanonical("switching function is not h = y"));
        }
        if !self.base.is_canonical_switching() {
            return Err(Error::NotCanonical("X- is not the constant field (0, 1)"));
        }
        Ok(FastSystem { rf: self.clone() })
    }

    /// Largest L ≤ 0.5 with X⁺₂(x, 0) < 0 on a 10³-point grid of [−L, 0).
    pub fn default_l(&self) -> Result<f64> {
        let mut l = 0.0;
        for i in 1..=1000 {
            let x = -0.5 * i as f64 / 1000.0;
            if self.base.x_plus.eval([x, 0.0])[1] < 0.0 {
                l = -x;
            } else {
                break;
            }
        }
        if l == 0.0 {
            return Err(Error::ConditionViolated(
                "X+_2(x, 0) < 0 fails next to the origin".into(),
            ));
        }
        Ok(l)
    }

    pub fn critical_manifold(&self, l: f64) -> Result<CriticalManifold> {
        CriticalManifold::new(self, l)
    }
}

#[inline]
fn mix(phi: &TransitionFunction, s: f64, xp: Point, xm: Point) -> Point {
    let a = 0.5 * phi.one_plus(s);
    let b = 0.5 * phi.one_minus(s);
    [a * xp[0] + b * xm[0], a * xp[1] + b * xm[1]]
}

/// Band dynamics in (x, ŷ, ℓ) with ŷ = y/ε, fast time τ = t/ε and ℓ the
/// accumulated divergence; valid for any system with h = y.
fn band_rhs(rf: &RegularizedField, s: &[f64; 3]) -> [f64; 3] {
    let eps = rf.eps;
    let p = [s[0], eps * s[1]];
    let xp = rf.base.x_plus.eval(p);
    let xm = rf.base.x_minus.eval(p);
    let yh = s[1].clamp(-1.0, 1.0);
    let a = 0.5 * rf.phi.one_plus(yh);
    let b = 0.5 * rf.phi.one_minus(yh);
    let jp = rf.base.x_plus.jacobian(p);
    let jm = rf.base.x_minus.jacobian(p);
    let dphi = 0.5 * rf.phi.big_phi_prime(yh);
    let div =
        eps * (a * (jp[0][0] + jp[1][1]) + b * (jm[0][0] + jm[1][1])) + dphi * (xp[1] - xm[1]);
    [eps * (a * xp[0] + b * xm[0]), a * xp[1] + b * xm[1], div]
}

/// x' = εZ₁(x, εŷ), ŷ' = Z₂(x, εŷ) in fast time τ = t/ε.
#[derive(Clone, Debug)]
pub struct FastSystem {
    rf: RegularizedField,
}

impl FastSystem {
    pub fn eps(&self) -> f64 {
        self.rf.eps
    }

    pub fn regularized(&self) -> &RegularizedField {
        &self.rf
    }

    #[inline]
    pub fn rhs(&self, x: f64, yh: f64) -> [f64; 2] {
        let eps = self.rf.eps;
        let p = [x, eps * yh];
        let z = mix(
            &self.rf.phi,
            yh.clamp(-1.0, 1.0),
            self.rf.base.x_plus.eval(p),
            self.rf.base.x_minus.eval(p),
        );
        [eps * z[0], z[1]]
    }

    /// Right-hand side with the divergence appended as a third component.
    #[inline]
    pub fn rhs_with_divergence(&self, s: &[f64; 3]) -> [f64; 3] {
        band_rhs(&self.rf, s)
    }

    /// ε = 0 slice: x' = 0, ŷ' = Z₂(x, 0) at ŷ.
    pub fn layer(&self, x: f64, yh: f64) -> [f64; 2] {
        let xp = self.rf.base.x_plus.eval([x, 0.0]);
        let xm = self.rf.base.x_minus.eval([x, 0.0]);
        [0.0, mix(&self.rf.phi, yh, xp, xm)[1]]
    }

    pub fn divergence(&self, x: f64, yh: f64) -> f64 {
        band_rhs(&self.rf, &[x, yh, 0.0])[2]
    }

    pub fn to_raw(&self, x: f64, yh: f64) -> Point {
        [x, self.rf.eps * yh]
    }

    /// Integrates in fast time; events act on (x, ŷ).
    pub fn solve(
        &self,
        start: [f64; 2],
        tau_end: f64,
        cfg: &IntegratorConfig,
        events: &[Event<'_, 2>],
    ) -> Result<crate::integrate::Solution<2>> {
        integrate(
            |s: &[f64; 2]| self.rhs(s[0], s[1]),
            0.0,
            start,
            tau_end,
            cfg,
            events,
            None,
        )
    }
}

/// Upper: y ≥ ε with X⁺; Band: |y| < ε in fast variables; Lower: y ≤ −ε with X⁻.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Upper,
    Band,
    Lower,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Target {
    Section(SectionSpec),
    /// First exit of the band through y = ε.
    BandTop,
    /// First exit of the band through y = −ε.
    BandBottom,
}

#[derive(Clone, Debug)]
pub struct HybridOptions {
    pub cfg: IntegratorConfig,
    pub direction: TimeDirection,
    /// Budget of physical time.
    pub max_time: f64,
    pub window: Rect,
    pub max_switches: usize,
    /// Sections whose crossings are recorded without stopping.
    pub marks: Vec<SectionSpec>,
}

impl Default for HybridOptions {
    fn default() -> Self {
        HybridOptions {
            cfg: IntegratorConfig::default(),
            direction: TimeDirection::Forward,
            max_time: 100.0,
            window: Rect::PLANE,
            max_switches: 64,
            marks: Vec::new(),
        }
    }
}

impl HybridOptions {
    pub fn backward(mut self) -> Self {
        self.direction = TimeDirection::Backward;
        self
    }

    pub fn with_window(mut self, w: Rect) -> Self {
        self.window = w;
        self
    }

    pub fn with_max_time(mut self, t: f64) -> Self {
        self.max_time = t;
        self
    }

    pub fn with_cfg(mut self, cfg: IntegratorConfig) -> Self {
        self.cfg = cfg;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BandCrossing {
    pub t: f64,
    pub point: Point,
    pub from: Region,
    pub to: Region,
}

#[derive(Clone, Debug)]
pub struct HybridOutcome {
    pub end: Point,
    /// Signed physical time elapsed.
    pub t: f64,
    /// ∫ div Z_ε dt along the orbit: log of the flow's Jacobian determinant.
    pub log_jacobian: f64,
    pub hit: Option<EventHit>,
    pub crossings: Vec<BandCrossing>,
    pub marks: Vec<EventHit>,
    pub trajectory: Trajectory,
}

impl HybridOutcome {
    /// Crossings of y = ε in either direction.
    pub fn top_crossings(&self) -> usize {
        self.crossings
            .iter()
            .filter(|c| {
                matches!(
                    (c.from, c.to),
                    (Region::Upper, Region::Band) | (Region::Band, Region::Upper)
                )
            })
            .count()
    }
}

const ID_TOP: usize = usize::MAX;
const ID_BOTTOM: usize = usize::MAX - 1;
const ID_TARGET: usize = usize::MAX - 2;

fn section_event<'a>(s: SectionSpec, id: usize, y_scale: f64) -> Event<'a, 3> {
    let raw = move |p: &[f64; 3]| [p[0], y_scale * p[1]];
    Event::new(id, move |p: &[f64; 3]| s.residual(raw(p)))
        .direction(s.direction)
        .filter(move |p: &[f64; 3]| s.admits(raw(p)))
}

/// Region to enter from a point on (or off) the band boundary, following
/// the sign of Z₂ in the direction of traversal.
fn entry_region(rf: &RegularizedField, p: Point, dir: f64) -> Region {
    if let Some(r) = rf.region(p[1]) {
        return r;
    }
    let v = if p[1] > 0.0 {
        rf.base.x_plus.eval(p)[1]
    } else {
        rf.base.x_minus.eval(p)[1]
    };
    let up = v * dir > 0.0;
    match (p[1] > 0.0, up) {
        (true, true) => Region::Upper,
        (true, false) => Region::Band,
        (false, true) => Region::Band,
        (false, false) => Region::Lower,
    }
}

/// Integrates Z_ε from `p0` across regions until `target` (or, with no
/// target, until the time budget is spent).
pub fn hybrid_flow(
    rf: &RegularizedField,
    p0: Point,
    target: Option<Target>,
    opts: &HybridOptions,
) -> Result<HybridOutcome> {
    if !rf.base.h.is_horizontal() {
        return Err(Error::NotCanonical("hybrid integration needs h = y"));
    }
    if !opts.window.contains(p0) {
        return Err(Error::LeftWindow { x: p0[0], y: p0[1] });
    }
    let eps = rf.eps;
    let dir = opts.direction.sign();
    let record = opts.cfg.record;
    let mut out = HybridOutcome {
        end: p0,
        t: 0.0,
        log_jacobian: 0.0,
        hit: None,
        crossings: Vec::new(),
        marks: Vec::new(),
        trajectory: Trajectory::default(),
    };
    if record {
        out.trajectory.samples.push((0.0, p0));
    }
    let mut p = p0;
    let mut region = entry_region(rf, p, dir);
    let mut switches = 0usize;
    loop {
        let remaining = opts.max_time - out.t.abs();
        if remaining <= 0.0 {
            return match target {
                None => Ok(out),
                Some(_) => Err(Error::NoCrossing),
            };
        }
        let in_band = region == Region::Band;
        let y_scale = if in_band { eps } else { 1.0 };
        let t_scale = if in_band { eps } else { 1.0 };
        let mut events: Vec<Event<'_, 3>> = Vec::new();
        match region {
            Region::Upper => events.push(Event::new(ID_TOP, move |s: &[f64; 3]| s[1] - eps)),
            Region::Lower => events.push(Event::new(ID_BOTTOM, move |s: &[f64; 3]| s[1] + eps)),
            Region::Band => {
                events.push(Event::new(ID_TOP, |s: &[f64; 3]| s[1] - 1.0));
                events.push(Event::new(ID_BOTTOM, |s: &[f64; 3]| s[1] + 1.0));
            }
        }
        if let Some(Target::Section(sec)) = target {
            events.push(section_event(sec, ID_TARGET, y_scale));
        }
        for (i, m) in opts.marks.iter().enumerate() {
            events.push(section_event(*m, i, y_scale).mark());
        }
        let window = if in_band {
            Rect::new(
                opts.window.x,
                (opts.window.y.0 / eps, opts.window.y.1 / eps),
            )
        } else {
            opts.window
        };
        let start = [p[0], p[1] / y_scale, 0.0];
        let span = dir * remaining / t_scale;
        let res = match region {
            Region::Upper => integrate(
                |s: &[f64; 3]| {
                    let q = [s[0], s[1]];
                    let v = rf.base.x_plus.eval(q);
                    [v[0], v[1], rf.base.x_plus.divergence(q)]
                },
                0.0,
                start,
                span,
                &opts.cfg,
                &events,
                Some(window),
            ),
            Region::Lower => integrate(
                |s: &[f64; 3]| {
                    let q = [s[0], s[1]];
                    let v = rf.base.x_minus.eval(q);
                    [v[0], v[1], rf.base.x_minus.divergence(q)]
                },
                0.0,
                start,
                span,
                &opts.cfg,
                &events,
                Some(window),
            ),
            Region::Band => integrate(
                |s: &[f64; 3]| band_rhs(rf, s),
                0.0,
                start,
                span,
                &opts.cfg,
                &events,
                Some(window),
            ),
        };
        let sol = match res {
            Ok(s) => s,
            Err(Error::DomainExit { x, y }) => return Err(Error::LeftWindow { x, y: y * y_scale }),
            Err(e) => return Err(e),
        };
        let t0 = out.t;
        let to_hit = |h: &Hit<3>| EventHit {
            t: t0 + h.t * t_scale,
            point: [h.y[0], h.y[1] * y_scale],
            section_id: h.id,
            direction: h.direction,
        };
        for h in &sol.hits {
            if h.id < opts.marks.len() {
                out.marks.push(to_hit(h));
            }
        }
        if record {
            for (t, s) in sol.samples.iter().skip(1) {
                out.trajectory
                    .samples
                    .push((t0 + t * t_scale, [s[0], s[1] * y_scale]));
            }
        }
        out.t = t0 + sol.t * t_scale;
        out.log_jacobian += sol.y[2];
        p = [sol.y[0], sol.y[1] * y_scale];
        out.end = p;
        let Some(stop) = sol.terminal_hit() else {
            // Budget exhausted inside this region.
            return match target {
                None => Ok(out),
                Some(_) => Err(Error::NoCrossing),
            };
        };
        if stop.id == ID_TARGET {
            let hit = to_hit(stop);
            out.trajectory.events.push(hit);
            out.hit = Some(hit);
            return Ok(out);
        }
        // Region boundary: snap onto it and choose the next region.
        let boundary_y = if stop.id == ID_TOP { eps } else { -eps };
        p[1] = boundary_y;
        out.end = p;
        let next = entry_region(rf, p, dir);
        let next = if next == region {
            // Tangential touch: continue on the other side of the boundary.
            match (region, stop.id == ID_TOP) {
                (Region::Band, true) => Region::Upper,
                (Region::Band, false) => Region::Lower,
                _ => Region::Band,
            }
        } else {
            next
        };
        out.crossings.push(BandCrossing {
            t: out.t,
            point: p,
            from: region,
            to: next,
        });
        if region == Region::Band {
            let reached = match target {
                Some(Target::BandTop) => stop.id == ID_TOP,
                Some(Target::BandBottom) => stop.id == ID_BOTTOM,
                _ => false,
            };
            if reached {
                let hit = EventHit {
                    t: out.t,
                    point: p,
                    section_id: stop.id,
                    direction: if stop.id == ID_TOP {
                        Direction::Up
                    } else {
                        Direction::Down
                    },
                };
                out.hit = Some(hit);
                return Ok(out);
            }
        }
        switches += 1;
        if switches > opts.max_switches {
            return Err(Error::MaxRevolutions(switches));
        }
        region = next;
    }
}

/// Critical manifold ŷ = m0(x) of the layer problem and the first-order
/// correction m1, on [−L, 0).
#[derive(Clone, Debug)]
pub struct CriticalManifold {
    rf: RegularizedField,
    l: f64,
}

impl CriticalManifold {
    pub fn new(rf: &RegularizedField, l: f64) -> Result<Self> {
        rf.fast_system()?;
        if !(l > 0.0) {
            return Err(Error::InvalidParameter("L must be positive".into()));
        }
        for i in 0..1000 {
            let x = -l + l * i as f64 / 1000.0;
            let f = rf.base.x_plus.eval([x, 0.0])[1];
            if f >= 0.0 {
                return Err(Error::ConditionViolated(format!(
                    "X+_2(x, 0) = {f} is not negative at x = {x}"
                )));
            }
        }
        Ok(CriticalManifold { rf: rf.clone(), l })
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn regularized(&self) -> &RegularizedField {
        &self.rf
    }

    fn f(&self, x: f64) -> f64 {
        self.rf.base.x_plus.eval([x, 0.0])[1]
    }

    /// φ(m0) = (1+F)/(1−F) with F(x) = X⁺₂(x, 0), solved in the gap
    /// variable 1 − m0 so that m0 → 1 keeps full precision.
    pub fn m0(&self, x: f64) -> Result<f64> {
        if x == 0.0 {
            return Ok(1.0);
        }
        let f = self.f(x);
        if !(f < 0.0) {
            return Err(Error::ConditionViolated(format!(
                "X+_2({x}, 0) = {f} is not negative"
            )));
        }
        let gap = -2.0 * f / (1.0 - f);
        Ok(1.0 - self.rf.phi.solve_gap(gap)?)
    }

    pub fn m0_prime(&self, x: f64) -> Result<f64> {
        let m0 = self.m0(x)?;
        let f = self.f(x);
        let fp = self.rf.base.x_plus.jacobian([x, 0.0])[1][0];
        let d = self.rf.phi.big_phi_prime(m0);
        if d.abs() < 1e-300 {
            return Err(Error::DegenerateDenominator {
                context: "phi'(m0)",
                value: d,
            });
        }
        Ok(2.0 * fp / (d * (1.0 - f) * (1.0 - f)))
    }

    /// m1 = −m0'(m0'·X⁺₁ − ∂_yX⁺₂·m0)/F', all at (x, 0).
    pub fn m1(&self, x: f64) -> Result<f64> {
        let m0 = self.m0(x)?;
        let m0p = self.m0_prime(x)?;
        let p = [x, 0.0];
        let j = self.rf.base.x_plus.jacobian(p);
        let fp = j[1][0];
        if fp.abs() < 1e-12 {
            return Err(Error::DegenerateDenominator {
                context: "m1",
                value: fp,
            });
        }
        let x1 = self.rf.base.x_plus.eval(p)[0];
        Ok(-m0p * (m0p * x1 - j[1][1] * m0) / fp)
    }

    /// (2α/φ^{[n]})^{1/n}, the limit of (1 − m0(x))/|x|^{(2k−1)/n}.
    pub fn predicted_gap_coefficient(&self) -> Result<f64> {
        let n = self.rf.theorem_n;
        let b = self.rf.phi.bracket_constant(n)?;
        Ok((2.0 * self.rf.alpha()? / b).powf(1.0 / n as f64))
    }

    pub fn gap_ratio(&self, x: f64) -> Result<f64> {
        let k = self.rf.k()? as f64;
        let n = self.rf.theorem_n as f64;
        Ok((1.0 - self.m0(x)?) / x.abs().powf((2.0 * k - 1.0) / n))
    }

    /// Extrapolates the gap ratio to x → 0⁻ with a quadratic fit in
    /// s = |x|^{(2k−1)/n} over x ∈ [−1e−4, −1e−8].
    pub fn fitted_gap_coefficient(&self) -> Result<f64> {
        let k = self.rf.k()? as f64;
        let n = self.rf.theorem_n as f64;
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for j in 0..=16 {
            let x = -(10f64.powf(-4.0 - j as f64 / 4.0));
            let s = x.abs().powf((2.0 * k - 1.0) / n);
            rows.push([1.0, s, s * s]);
            rhs.push(self.gap_ratio(x)?);
        }
        let a = nalgebra::DMatrix::from_fn(rows.len(), 3, |i, j| rows[i][j]);
        let b = nalgebra::DVector::from_vec(rhs);
        let sol = a
            .svd(true, true)
            .solve(&b, 1e-14)
            .map_err(|e| Error::ConditionViolated(e.to_string()))?;
        Ok(sol[0])
    }

    /// Fast-system trajectory from (−L, m0 + εm1) after a transient of
    /// 5|log ε| fast-time units; proxy for the Fenichel manifold.
    pub fn sandwich_check(
        &self,
        lambda: f64,
        k_const: f64,
        points: usize,
    ) -> Result<SandwichReport> {
        let eps = self.rf.eps;
        let k = self.rf.k()?;
        let n = self.rf.theorem_n;
        let exponent = (2.0 * k as f64 * (n as f64 - 2.0) + 2.0) / n as f64;
        let x_end = -eps.powf(lambda);
        if x_end <= -self.l {
            return Err(Error::InvalidParameter(
                "-eps^lambda lies left of -L".into(),
            ));
        }
        let fs = self.rf.fast_system()?;
        let cfg = IntegratorConfig::default().without_record();
        let x0 = -self.l;
        let y0 = self.m0(x0)? + eps * self.m1(x0)?;
        let tau_t = 5.0 * eps.ln().abs();
        let transient = fs.solve([x0, y0], tau_t, &cfg, &[])?;
        let x_t = transient.y[0];
        if x_t >= x_end {
            return Err(Error::TransientNotDecayed { x: x_t });
        }
        let points = points.max(2);
        let grid: Vec<f64> = (0..points)
            .map(|i| x_t + (x_end - x_t) * i as f64 / (points - 1) as f64)
            .collect();
        let mut events: Vec<Event<'_, 2>> = grid
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, &xg)| Event::new(i, move |s: &[f64; 2]| s[0] - xg).mark())
            .collect();
        events.push(Event::new(usize::MAX, move |s: &[f64; 2]| s[0] - x_end));
        let sol = fs.solve(transient.y, 10.0 * self.l / eps + 1e3, &cfg, &events)?;
        let mut proxy = vec![f64::NAN; points];
        proxy[0] = transient.y[1];
        for h in &sol.hits {
            if h.id == usize::MAX {
                proxy[points - 1] = h.y[1];
            } else if proxy[h.id].is_nan() {
                proxy[h.id] = h.y[1];
            }
        }
        if proxy.iter().any(|v| v.is_nan()) {
            return Err(Error::TransientNotDecayed { x: sol.y[0] });
        }
        let mut rows = Vec::with_capacity(points);
        let mut k_min: f64 = 0.0;
        for (i, &x) in grid.iter().enumerate() {
            let m0 = self.m0(x)?;
            let m1 = self.m1(x)?;
            let w = x.abs().powf(exponent);
            k_min = k_min.max((m0 - proxy[i]) * w / eps);
            let lower = m0 - eps * k_const / w;
            rows.push(SandwichRow {
                x,
                m0,
                m1,
                m_proxy: proxy[i],
                lower_bound: lower,
                holds: lower <= proxy[i] && proxy[i] <= m0,
            });
        }
        let upper_holds = rows
            .iter()
            .all(|r| r.m_proxy <= r.m0 && r.m_proxy > -1.0 && r.m_proxy < 1.0);
        Ok(SandwichReport {
            eps,
            lambda,
            k_const,
            k_min,
            exponent,
            x_transient: x_t,
            upper_holds,
            rows,
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SandwichRow {
    pub x: f64,
    pub m0: f64,
    pub m1: f64,
    pub m_proxy: f64,
    pub lower_bound: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SandwichReport {
    pub eps: f64,
    pub lambda: f64,
    pub k_const: f64,
    /// Smallest K for which the lower bound holds on the grid.
    pub k_min: f64,
    /// Power of |x| in the lower bound, (2k(n−2)+2)/n.
    pub exponent: f64,
    pub x_transient: f64,
    pub upper_holds: bool,
    pub rows: Vec<SandwichRow>,
}

impl SandwichReport {
    pub fn all_hold(&self) -> bool {
        self.rows.iter().all(|r| r.holds)
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["x", "m0", "m1", "m_proxy", "lower_bound"])
            .meta("eps", fmt17(self.eps))
            .meta("lambda", fmt17(self.lambda))
            .meta("K", fmt17(self.k_const))
            .meta("K_min", fmt17(self.k_min));
        for r in &self.rows {
            t.push_f64(&[r.x, r.m0, r.m1, r.m_proxy, r.lower_bound]);
        }
        t
    }
}

/// `slow_manifold_sandwich_check` with the default 50-point grid.
pub fn slow_manifold_sandwich_check(
    rf: &RegularizedField,
    l: f64,
    lambda: f64,
    k_const: f64,
) -> Result<SandwichReport> {
    rf.critical_manifold(l)?.sandwich_check(lambda, k_const, 50)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{phi_family, CanonicalForm};
    use approx::assert_abs_diff_eq;

    fn canonical(k: u32, m: usize, eps: f64) -> RegularizedField {
        let z = CanonicalForm::simple(k, 1.0).unwrap().system();
        RegularizedField::new(z, phi_family(m).unwrap(), eps).unwrap()
    }

    #[test]
    fn blends_fields_and_is_continuous() {
        let rf = canonical(1, 1, 0.1);
        assert_eq!(rf.eval([0.0, 0.0]), [0.5, 0.5]);
        assert_eq!(rf.eval([0.3, 0.1]), rf.base().x_plus.eval([0.3, 0.1]));
        assert_eq!(rf.eval([0.3, -0.1]), [0.0, 1.0]);
        for y in [0.1, -0.1] {
            let a = rf.eval([0.3, y * (1.0 - 1e-15)]);
            let b = rf.eval([0.3, y * (1.0 + 1e-15)]);
            assert!((a[0] - b[0]).abs() <= 1e-12 && (a[1] - b[1]).abs() <= 1e-12);
        }
    }

    #[test]
    fn fast_system_values() {
        let rf = canonical(1, 1, 1e-3);
        let fs = rf.fast_system().unwrap();
        let v = fs.rhs(-0.5, 0.0);
        assert_abs_diff_eq!(v[1], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(v[0], 0.5e-3, epsilon = 1e-15);
        assert_eq!(fs.layer(-0.2, 0.3)[0], 0.0);
        let reversed = FilippovSystem::new(
            rf.base().x_plus.negated(),
            rf.base().x_minus.negated(),
            rf.base().h.clone(),
        );
        let r = RegularizedField::new(reversed, rf.phi().clone(), 1e-3).unwrap();
        assert!(matches!(r.fast_system(), Err(Error::NotCanonical(_))));
    }

    #[test]
    fn divergence_matches_finite_differences() {
        let rf = canonical(2, 2, 0.05);
        let fs = rf.fast_system().unwrap();
        for &(x, y) in &[(-0.3, 0.01), (0.2, -0.03), (0.1, 0.0)] {
            let h = 1e-6;
            let fd = (rf.eval([x + h, y])[0] - rf.eval([x - h, y])[0]) / (2.0 * h)
                + (rf.eval([x, y + h])[1] - rf.eval([x, y - h])[1]) / (2.0 * h);
            assert!((rf.divergence([x, y]) - fd).abs() < 1e-6 * (1.0 + fd.abs()));
            assert!((fs.divergence(x, y / 0.05) - 0.05 * fd).abs() < 1e-6 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn critical_manifold_values() {
        let rf = canonical(1, 1, 1e-4);
        let cm = rf.critical_manifold(0.5).unwrap();
        assert_abs_diff_eq!(
            cm.m0(-1.0 / 3.0).unwrap(),
            0.3472963553338607,
            epsilon = 1e-13
        );
        assert_eq!(cm.m0(0.0).unwrap(), 1.0);
        let v = fs_layer_residual(&rf, &cm, -0.2);
        assert!(v.abs() < 1e-14);
        assert_abs_diff_eq!(
            cm.predicted_gap_coefficient().unwrap(),
            (4.0f64 / 3.0).sqrt(),
            epsilon = 1e-14
        );
        let fit = cm.fitted_gap_coefficient().unwrap();
        assert!((fit / (4.0f64 / 3.0).sqrt() - 1.0).abs() < 1e-3, "{fit}");
        // m0 increasing, m1 negative.
        let xs: Vec<f64> = (1..100).map(|i| -0.5 + 0.005 * i as f64).collect();
        for w in xs.windows(2) {
            assert!(cm.m0(w[0]).unwrap() < cm.m0(w[1]).unwrap());
        }
        assert!(cm.m1(-0.3).unwrap() < 0.0);
        let shifted = CanonicalForm::with_constant_theta(1, 1.0, 0.0)
            .unwrap()
            .system();
        let bad = RegularizedField::new(
            FilippovSystem::new(
                PlanarField::from_fn(|p| [1.0, p[0] + 0.1]),
                shifted.x_minus.clone(),
                shifted.h.clone(),
            ),
            phi_family(1).unwrap(),
            1e-3,
        )
        .unwrap();
        assert!(matches!(
            bad.critical_manifold(0.5),
            Err(Error::ConditionViolated(_))
        ));
    }

    fn fs_layer_residual(rf: &RegularizedField, cm: &CriticalManifold, x: f64) -> f64 {
        rf.fast_system().unwrap().layer(x, cm.m0(x).unwrap())[1]
    }

    #[test]
    fn m1_matches_invariance_residual() {
        // Substituting m0 + εm1 into the invariance equation leaves O(ε²).
        let rf = canonical(1, 1, 1e-4);
        let cm = rf.critical_manifold(0.5).unwrap();
        let x = -0.3;
        let res = |eps: f64| {
            let r = rf.with_eps(eps).unwrap();
            let fs = r.fast_system().unwrap();
            let m = cm.m0(x).unwrap() + eps * cm.m1(x).unwrap();
            let h = 1e-6;
            let mp = ((cm.m0(x + h).unwrap() + eps * cm.m1(x + h).unwrap())
                - (cm.m0(x - h).unwrap() + eps * cm.m1(x - h).unwrap()))
                / (2.0 * h);
            let v = fs.rhs(x, m);
            mp * v[0] - v[1]
        };
        let r1 = res(1e-3).abs();
        let r2 = res(5e-4).abs();
        assert!(r1 < 1e-5 && r2 < r1 / 3.0, "{r1} {r2}");
    }

    #[test]
    fn sandwich_holds_with_reported_constant() {
        let rf = canonical(1, 1, 1e-4);
        let rep = slow_manifold_sandwich_check(&rf, 0.5, 0.5, 10.0).unwrap();
        assert!(rep.upper_holds);
        assert_eq!(rep.rows.len(), 50);
        assert!(rep.k_min > 0.0 && rep.k_min.is_finite());
        let tight = rf
            .critical_manifold(0.5)
            .unwrap()
            .sandwich_check(0.5, rep.k_min * (1.0 + 1e-9), 50)
            .unwrap();
        assert!(tight.all_hold());
        let text = rep.to_table().render();
        assert!(text.contains("x,m0,m1,m_proxy,lower_bound"));
    }

    #[test]
    fn hybrid_flow_crosses_band_in_fast_variables() {
        let eps = 1e-3;
        let rf = canonical(1, 1, eps);
        // From below the band, X⁻ lifts the point into the band, where it
        // slides to the right and exits near x_ε.
        let out = hybrid_flow(
            &rf,
            [-0.3, -0.01],
            Some(Target::BandTop),
            &HybridOptions::default(),
        )
        .unwrap();
        assert_eq!(out.crossings[0].to, Region::Band);
        assert_abs_diff_eq!(out.end[1], eps, epsilon = 1e-15);
        assert!(out.end[0] > 0.0 && out.end[0] < 0.1);
        // Liouville against a finite-difference Jacobian of the time-t map.
        let t = out.t;
        let opts = HybridOptions::default().with_max_time(t);
        let base = hybrid_flow(&rf, [-0.3, -0.01], None, &opts).unwrap();
        assert!((base.end[0] - out.end[0]).abs() < 1e-7);
        // Raw integration of the stiff field agrees after the band.
        let raw = crate::integrate::flow(
            &rf.field(),
            [-0.3, -0.01],
            (0.0, t),
            &IntegratorConfig::default(),
        )
        .unwrap();
        let e = raw.end().unwrap();
        assert!(
            (e[0] - out.end[0]).abs() < 1e-6 && (e[1] - out.end[1]).abs() < 1e-6,
            "{e:?} {:?}",
            out.end
        );
    }

    #[test]
    fn hybrid_flow_hits_sections_and_marks() {
        let eps = 1e-2;
        let rf = canonical(1, 1, eps);
        let mut opts = HybridOptions::default();
        opts.marks.push(SectionSpec::vertical(0.0));
        let sec = SectionSpec::vertical(0.3).with_interval(eps, 1.0);
        let out = hybrid_flow(&rf, [-0.3, 0.03], Some(Target::Section(sec)), &opts).unwrap();
        let hit = out.hit.unwrap();
        assert_abs_diff_eq!(hit.point[0], 0.3, epsilon = 1e-12);
        assert_eq!(out.top_crossings(), 2);
        assert_eq!(out.marks.len(), 1);
        let back = hybrid_flow(
            &rf,
            hit.point,
            Some(Target::Section(SectionSpec::vertical(-0.3))),
            &HybridOptions::default().backward(),
        )
        .unwrap();
        // Backward from the contracted image lands on the Fenichel side.
        assert!(back.t < 0.0);
        let w = Rect::new((-0.5, 0.5), (-0.5, 0.5));
        let esc = hybrid_flow(
            &rf,
            [0.4, 0.2],
            Some(Target::BandTop),
            &HybridOptions::default().with_window(w),
        );
        assert!(matches!(esc, Err(Error::LeftWindow { .. })));
    }
}

//! Blow-up charts of the fold of the critical manifold.
//!
//! Chart 2 gives the Riccati-type system u' = 1, v' = −u^{2k−1} − v^n + σ,
//! whose attracting solution crosses v = 0 at u*; then η = c_x u*.
//! Chart 1 carries the equilibrium (x₁*, 0, 0) of the entry chart.

use nalgebra::Matrix3;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{CanonicalForm, TransitionFunction};
use crate::integrate::{integrate, Direction, Event, IntegratorConfig};

/// 1 + 2k(n−1).
pub fn big_n(k: u32, n: usize) -> usize {
    1 + 2 * k as usize * (n - 1)
}

fn odd_root(v: f64, p: u32) -> f64 {
    v.signum() * v.abs().powf(1.0 / p as f64)
}

#[derive(Clone, Debug)]
pub struct Chart2Config {
    pub k: u32,
    pub theorem_n: usize,
    pub sigma: f64,
    pub u0: f64,
    pub v0: f64,
    pub max_time: f64,
    pub cfg: IntegratorConfig,
}

impl Chart2Config {
    /// Start on the attracting isocline v = (σ − u^{2k−1})^{1/n} at u0 < 0.
    pub fn on_isocline(k: u32, theorem_n: usize, sigma: f64, u0: f64) -> Result<Self> {
        let w = sigma - u0.powi(2 * k as i32 - 1);
        if !(w > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "isocline undefined at u0 = {u0}"
            )));
        }
        let c = Chart2Config {
            k,
            theorem_n,
            sigma,
            u0,
            v0: w.powf(1.0 / theorem_n as f64),
            max_time: 1e3,
            cfg: IntegratorConfig::default(),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v0 > 0.0) {
            return Err(Error::InvalidParameter("v0 must be positive".into()));
        }
        let lo = 2.max(2 * self.k as usize - 1);
        if self.k == 0 || self.theorem_n < lo {
            return Err(Error::InvalidParameter(format!(
                "n = {} must be at least {lo}",
                self.theorem_n
            )));
        }
        Ok(())
    }

    pub fn rhs(&self, s: &[f64; 2]) -> [f64; 2] {
        [
            1.0,
            -s[0].powi(2 * self.k as i32 - 1) - s[1].powi(self.theorem_n as i32) + self.sigma,
        ]
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Chart2Crossing {
    pub u_star: f64,
    /// Largest v seen before the crossing.
    pub max_v: f64,
    #[serde(skip)]
    pub path: Vec<[f64; 2]>,
}

pub fn chart2_trajectory(cfg: &Chart2Config) -> Result<Chart2Crossing> {
    cfg.validate()?;
    let ev = [Event::new(0, |s: &[f64; 2]| s[1]).direction(Some(Direction::Down))];
    let sol = integrate(
        |s| cfg.rhs(s),
        0.0,
        [cfg.u0, cfg.v0],
        cfg.max_time,
        &cfg.cfg,
        &ev,
        None,
    )?;
    let hit = sol.terminal_hit().ok_or(Error::NoCrossing)?;
    let u_star = hit.y[0];
    let bound = odd_root(cfg.sigma, 2 * cfg.k - 1);
    if !(u_star > bound) {
        return Err(Error::ConditionViolated(format!(
            "u* = {u_star} not above {bound}"
        )));
    }
    let path: Vec<[f64; 2]> = sol.samples.iter().map(|s| s.1).collect();
    let max_v = path.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
    Ok(Chart2Crossing {
        u_star,
        max_v,
        path,
    })
}

/// Abscissa u* where the chart-2 orbit reaches v = 0.
pub fn chart2_crossing(cfg: &Chart2Config) -> Result<f64> {
    chart2_trajectory(cfg).map(|c| c.u_star)
}

/// c_x = (2 / (φ^{[n]} α^{n−1}))^{1/(1+2k(n−1))}.
pub fn c_x(k: u32, theorem_n: usize, alpha: f64, phi_n: f64) -> f64 {
    (2.0 / (phi_n * alpha.powi(theorem_n as i32 - 1))).powf(1.0 / big_n(k, theorem_n) as f64)
}

/// σ_{n,k}: −ϑ(0,0)/(α c_x^n) when n = 2k−1 and k ≠ 1, else 0.
pub fn sigma_nk(k: u32, theorem_n: usize, alpha: f64, c_x: f64, theta00: f64) -> f64 {
    if theorem_n == 2 * k as usize - 1 && k != 1 {
        -theta00 / (alpha * c_x.powi(theorem_n as i32))
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChartConstants {
    pub c_x: f64,
    pub c_y: f64,
    pub x1_star: f64,
    pub lambda1: f64,
}

impl ChartConstants {
    pub fn new(k: u32, theorem_n: usize, alpha: f64, phi_n: f64) -> Self {
        let cx = c_x(k, theorem_n, alpha, phi_n);
        ChartConstants {
            c_x: cx,
            c_y: -alpha * cx.powi(2 * k as i32),
            x1_star: -odd_root(phi_n / (2.0 * alpha), 2 * k - 1),
            lambda1: -phi_n * theorem_n as f64 / 2.0,
        }
    }
}

/// `{k, n, sigma, u_star, c_x, eta, x1_star, lambda1}`.
#[derive(Clone, Debug, Serialize)]
pub struct EtaReport {
    pub k: u32,
    pub n: usize,
    pub sigma: f64,
    pub u_star: f64,
    pub c_x: f64,
    pub eta: f64,
    pub x1_star: f64,
    pub lambda1: f64,
    /// |u*(−U) − u*(−U/2)|.
    pub start_sensitivity: f64,
}

pub const U_BIG: f64 = 20.0;

/// η = c_x u* for the canonical form, with u* started on the isocline at
/// −20 and checked against −10.
pub fn eta_for(form: &CanonicalForm, phi: &TransitionFunction) -> Result<EtaReport> {
    let k = form.k();
    let n = phi.theorem_n();
    let alpha = form.alpha();
    let phi_n = phi.bracket_constant(n)?;
    let cc = ChartConstants::new(k, n, alpha, phi_n);
    let sigma = sigma_nk(k, n, alpha, cc.c_x, form.theta(0.0, 0.0));
    let u_star = chart2_crossing(&Chart2Config::on_isocline(k, n, sigma, -U_BIG)?)?;
    let u_half = chart2_crossing(&Chart2Config::on_isocline(k, n, sigma, -U_BIG / 2.0)?)?;
    let eta = cc.c_x * u_star;
    if !(eta > sigma) {
        return Err(Error::ConditionViolated(format!(
            "eta = {eta} not above sigma = {sigma}"
        )));
    }
    Ok(EtaReport {
        k,
        n,
        sigma,
        u_star,
        c_x: cc.c_x,
        eta,
        x1_star: cc.x1_star,
        lambda1: cc.lambda1,
        start_sensitivity: (u_star - u_half).abs(),
    })
}

/// η for X⁺ = (1, αx^{2k−1}).
pub fn eta_from_chart(k: u32, alpha: f64, phi: &TransitionFunction) -> Result<f64> {
    eta_for(&CanonicalForm::simple(k, alpha)?, phi).map(|r| r.eta)
}

/// The chart-1 vector field in (x₁, r₁, ε₁).
#[derive(Clone, Debug)]
pub struct Chart1 {
    form: CanonicalForm,
    phi: TransitionFunction,
    n: usize,
    phi_n: f64,
    g_tilde: Vec<f64>,
}

impl Chart1 {
    pub fn new(form: &CanonicalForm, phi: &TransitionFunction) -> Result<Self> {
        let n = phi.theorem_n();
        Ok(Chart1 {
            form: form.clone(),
            phi: phi.clone(),
            n,
            phi_n: phi.bracket_constant(n)?,
            g_tilde: form.g_tilde().to_f64(),
        })
    }

    fn k(&self) -> i32 {
        self.form.k() as i32
    }

    /// x₁^{2k−1}(α + g̃(r₁ⁿx₁)) + (φ^{[n]}/2)(1 − r₁^{2k−1}Υ(−r₁^{2k−1})).
    pub fn h(&self, x1: f64, r1: f64) -> f64 {
        let k = self.k();
        let gt = crate::field::poly::horner(&self.g_tilde, r1.powi(self.n as i32) * x1);
        // q(w)/wⁿ = φ^{[n]}(1 − wΥ(−w)).
        let tail = if r1 == 0.0 {
            self.phi_n
        } else {
            self.phi.reduced_gap(r1.powi(2 * k - 1))
        };
        x1.powi(2 * k - 1) * (self.form.alpha() + gt) + 0.5 * tail
    }

    /// (r₁ⁿ − r₁^{1−2k+n}) ε₁ ϑ(r₁ⁿx₁, −r₁^{2k(n−1)}(−r₁ + r₁^{2k})ε₁).
    pub fn j(&self, x1: f64, r1: f64, e1: f64) -> f64 {
        let k = self.k();
        let n = self.n as i32;
        let pre = r1.powi(n) - r1.powi(1 - 2 * k + n);
        if pre == 0.0 || e1 == 0.0 {
            return 0.0;
        }
        let y = -r1.powi(2 * k * (n - 1)) * (-r1 + r1.powi(2 * k)) * e1;
        pre * e1 * self.form.theta(r1.powi(n) * x1, y)
    }

    pub fn rhs(&self, s: &[f64; 3]) -> [f64; 3] {
        let [x1, r1, e1] = *s;
        let d = (2 * self.k() - 1) as f64;
        let hh = self.h(x1, r1) - self.j(x1, r1, e1);
        [
            e1 + self.n as f64 * x1 * hh / d,
            -r1 * hh / d,
            big_n(self.form.k(), self.n) as f64 * e1 * hh / d,
        ]
    }

    /// ε₁ r₁^{1+2k(n−1)}, conserved by the flow.
    pub fn invariant(&self, s: &[f64; 3]) -> f64 {
        s[2] * s[1].powi(big_n(self.form.k(), self.n) as i32)
    }

    /// Central-difference Jacobian.
    pub fn jacobian(&self, s: &[f64; 3], h: f64) -> Matrix3<f64> {
        let mut m = Matrix3::zeros();
        for j in 0..3 {
            let mut a = *s;
            let mut b = *s;
            a[j] += h;
            b[j] -= h;
            let (fa, fb) = (self.rhs(&a), self.rhs(&b));
            for i in 0..3 {
                m[(i, j)] = (fa[i] - fb[i]) / (2.0 * h);
            }
        }
        m
    }

    pub fn constants(&self) -> ChartConstants {
        ChartConstants::new(self.form.k(), self.n, self.form.alpha(), self.phi_n)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Chart1Check {
    pub constants: ChartConstants,
    /// max |rhs(x₁*, 0, 0)|.
    pub residual: f64,
    /// Eigenvalue of largest modulus of the numeric Jacobian.
    pub numeric_lambda1: f64,
}

pub fn chart1_check(form: &CanonicalForm, phi: &TransitionFunction) -> Result<Chart1Check> {
    let c1 = Chart1::new(form, phi)?;
    let constants = c1.constants();
    let p = [constants.x1_star, 0.0, 0.0];
    let residual = c1.rhs(&p).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let eig = c1.jacobian(&p, 1e-5).complex_eigenvalues();
    let top = eig
        .iter()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .expect("3 eigenvalues");
    Ok(Chart1Check {
        constants,
        residual,
        numeric_lambda1: top.re,
    })
}

/// Equilibrium data for X⁺ = (1, αx^{2k−1}).
pub fn chart1_equilibrium(k: u32, alpha: f64, phi: &TransitionFunction) -> Result<ChartConstants> {
    let n = phi.theorem_n();
    Ok(ChartConstants::new(k, n, alpha, phi.bracket_constant(n)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::phi_family;
    use approx::assert_abs_diff_eq;

    #[test]
    fn chart2_k1_n2() {
        let c = Chart2Config::on_isocline(1, 2, 0.0, -10.0).unwrap();
        assert_abs_diff_eq!(c.v0, 10f64.sqrt(), epsilon = 1e-14);
        let a = chart2_trajectory(&c).unwrap();
        assert!(a.u_star > 0.0);
        assert!(a.max_v <= c.v0 * (1.0 + 1e-12));
        let b = chart2_crossing(&Chart2Config::on_isocline(1, 2, 0.0, -20.0).unwrap()).unwrap();
        assert!((a.u_star - b).abs() < 1e-6, "{} {b}", a.u_star);
    }

    #[test]
    fn chart2_sigma_bound() {
        let u = chart2_crossing(&Chart2Config::on_isocline(1, 2, 1.0, -10.0).unwrap()).unwrap();
        assert!(u > 1.0);
    }

    #[test]
    fn u_star_monotone_in_sigma() {
        for k in [1, 2] {
            let n = 3;
            let us: Vec<f64> = [-0.5, 0.0, 0.5, 1.0]
                .iter()
                .map(|&s| {
                    chart2_crossing(&Chart2Config::on_isocline(k, n, s, -10.0).unwrap()).unwrap()
                })
                .collect();
            assert!(us.windows(2).all(|w| w[1] >= w[0]), "{us:?}");
        }
    }

    #[test]
    fn chart_constants_values() {
        let phi1 = phi_family(1).unwrap();
        let c = chart1_equilibrium(1, 1.0, &phi1).unwrap();
        assert_abs_diff_eq!(c.x1_star, -0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(c.lambda1, -1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(c.c_x, (4.0f64 / 3.0).powf(1.0 / 3.0), epsilon = 1e-15);
        assert!(c.c_y < 0.0);
        let c = chart1_equilibrium(2, 1.0, &phi_family(2).unwrap()).unwrap();
        assert_abs_diff_eq!(c.x1_star, -(1.25f64).powf(1.0 / 3.0), epsilon = 1e-15);
        assert_abs_diff_eq!(c.lambda1, -3.75, epsilon = 1e-15);
    }

    #[test]
    fn chart1_equilibrium_is_hyperbolic_in_x1() {
        for (k, m) in [(1, 1), (2, 2), (1, 2), (2, 5)] {
            let form = CanonicalForm::with_constant_theta(k, 1.0, -1.0).unwrap();
            let r = chart1_check(&form, &phi_family(m).unwrap()).unwrap();
            assert!(r.residual < 1e-12, "{r:?}");
            assert!(
                (r.numeric_lambda1 - r.constants.lambda1).abs() < 1e-8,
                "{r:?}"
            );
        }
    }

    #[test]
    fn chart1_invariant_conserved() {
        let form = CanonicalForm::with_constant_theta(1, 1.0, 0.5).unwrap();
        let c1 = Chart1::new(&form, &phi_family(1).unwrap()).unwrap();
        let s0 = [-0.6, 0.3, 0.05];
        let i0 = c1.invariant(&s0);
        let t = 2.0;
        let sol = integrate(
            |s| c1.rhs(s),
            0.0,
            s0,
            t,
            &IntegratorConfig::default(),
            &[],
            None,
        )
        .unwrap();
        let drift = (c1.invariant(&sol.y) - i0).abs() / i0;
        assert!(drift / t < 1e-8, "{drift}");
    }

    #[test]
    fn eta_positive_without_theta() {
        let r = eta_for(
            &CanonicalForm::simple(1, 1.0).unwrap(),
            &phi_family(1).unwrap(),
        )
        .unwrap();
        assert_eq!(r.sigma, 0.0);
        assert!(r.eta > 0.0 && r.start_sensitivity < 1e-6, "{r:?}");
        let r = eta_for(
            &CanonicalForm::with_constant_theta(2, 1.0, -1.0).unwrap(),
            &phi_family(2).unwrap(),
        )
        .unwrap();
        assert!(r.sigma > 0.0 && r.eta > r.sigma, "{r:?}");
    }
}

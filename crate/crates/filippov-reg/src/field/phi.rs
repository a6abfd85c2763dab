//! Transition functions of class C^m_ST and their sign extension Φ.
//!
//! A transition function is an odd monotone profile on [−1, 1] with
//! φ(±1) = ±1 whose first `m` derivatives vanish at ±1. Polynomial profiles
//! keep exact rational coefficients; the gap polynomial
//! q(w) = 1 − φ(1 − w) gives 1 ∓ φ(s) without cancellation near the edges.

use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use super::poly::{horner, rat, rat_to_f64, Poly1, Rational};
use crate::error::{Error, Result};

type CustomEval = Arc<dyn Fn(f64, usize) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Profile {
    Poly(Box<PolyProfile>),
    /// User-supplied `(s, order) -> φ^(order)(s)` on [−1, 1].
    Custom(CustomEval),
}

#[derive(Clone)]
struct PolyProfile {
    phi: Poly1,
    /// Exact derivatives φ, φ', ..., φ^(m+1).
    derivs: Vec<Poly1>,
    derivs_f64: Vec<Vec<f64>>,
    /// q(w) = 1 − φ(1 − w), valuation m + 1.
    gap_f64: Vec<f64>,
    gap_prime_f64: Vec<f64>,
    /// q(w) / w^(m+1).
    gap_reduced_f64: Vec<f64>,
}

/// Monotone transition profile φ with its sign extension Φ.
#[derive(Clone)]
pub struct TransitionFunction {
    n_class: usize,
    profile: Profile,
}

impl std::fmt::Debug for TransitionFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.profile {
            Profile::Poly(p) => f
                .debug_struct("TransitionFunction")
                .field("n_class", &self.n_class)
                .field("coeffs", &p.phi.to_f64())
                .finish(),
            Profile::Custom(_) => f
                .debug_struct("TransitionFunction")
                .field("n_class", &self.n_class)
                .field("custom", &true)
                .finish(),
        }
    }
}

fn factorial(n: usize) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, i| acc * BigInt::from(i))
}

fn binomial(n: usize, k: usize) -> BigInt {
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// The family φ_m(x) = (−1)^m (2m+1)!/(2^{2m}(m!)²) ∫₀^x (s²−1)^m ds.
pub fn phi_family(m: usize) -> Result<TransitionFunction> {
    if m == 0 {
        return Err(Error::InvalidParameter("phi_family needs m >= 1".into()));
    }
    let mut integrand = vec![Rational::zero(); 2 * m + 1];
    for j in 0..=m {
        let sign = if (m - j) % 2 == 0 { 1 } else { -1 };
        integrand[2 * j] = Rational::from_integer(binomial(m, j) * BigInt::from(sign));
    }
    let sign = if m % 2 == 0 {
        BigInt::one()
    } else {
        -BigInt::one()
    };
    let norm = Rational::new(
        sign * factorial(2 * m + 1),
        BigInt::from(4).pow(m as u32) * factorial(m) * factorial(m),
    );
    let phi = Poly1::from_coeffs(integrand).integral().scale(&norm);
    TransitionFunction::from_poly(phi, m)
}

impl TransitionFunction {
    /// Wraps an odd polynomial profile of class C^m_ST and verifies the exact
    /// boundary conditions.
    pub fn from_poly(phi: Poly1, n_class: usize) -> Result<Self> {
        if n_class == 0 {
            return Err(Error::InvalidParameter("class must be at least 1".into()));
        }
        if !phi.is_odd() {
            return Err(Error::InvalidParameter(
                "transition polynomial must be odd".into(),
            ));
        }
        let one = Rational::one();
        if phi.eval(&one) != one {
            return Err(Error::InvalidParameter("phi(1) must equal 1".into()));
        }
        let mut derivs = vec![phi.clone()];
        for _ in 0..=n_class {
            let next = derivs.last().unwrap().derivative();
            derivs.push(next);
        }
        for (i, d) in derivs.iter().enumerate().skip(1).take(n_class) {
            if !d.eval(&one).is_zero() {
                return Err(Error::InvalidParameter(format!(
                    "phi^({i})(1) must vanish for class {n_class}"
                )));
            }
        }
        if derivs[n_class + 1].eval(&one).is_zero() {
            return Err(Error::ClassMismatch { order: n_class + 1 });
        }
        let gap = &Poly1::constant(one.clone()) - &phi.compose_affine(&one, &-one.clone());
        let gap_reduced = gap
            .shift_down(n_class + 1)
            .ok_or_else(|| Error::InvalidParameter("gap polynomial valuation too low".into()))?;
        let profile = PolyProfile {
            derivs_f64: derivs.iter().map(Poly1::to_f64).collect(),
            gap_f64: gap.to_f64(),
            gap_prime_f64: gap.derivative().to_f64(),
            gap_reduced_f64: gap_reduced.to_f64(),
            phi,
            derivs,
        };
        let tf = TransitionFunction {
            n_class,
            profile: Profile::Poly(Box::new(profile)),
        };
        if !tf.is_monotone() {
            return Err(Error::InvalidParameter(
                "phi' must be positive on (-1, 1)".into(),
            ));
        }
        Ok(tf)
    }

    /// A non-polynomial profile given by its derivative evaluator. Exact
    /// invariants are not checked for such profiles.
    pub fn custom<F>(n_class: usize, eval: F) -> Self
    where
        F: Fn(f64, usize) -> f64 + Send + Sync + 'static,
    {
        TransitionFunction {
            n_class,
            profile: Profile::Custom(Arc::new(eval)),
        }
    }

    /// The m of C^m_ST.
    pub fn n_class(&self) -> usize {
        self.n_class
    }

    /// Regularity index n = m + 1 (first non-vanishing boundary derivative).
    pub fn theorem_n(&self) -> usize {
        self.n_class + 1
    }

    pub fn poly(&self) -> Option<&Poly1> {
        match &self.profile {
            Profile::Poly(p) => Some(&p.phi),
            Profile::Custom(_) => None,
        }
    }

    /// Exact `φ^(order)(s)`; only for polynomial profiles and order ≤ m + 1.
    pub fn exact_derivative(&self, order: usize, s: &Rational) -> Option<Rational> {
        match &self.profile {
            Profile::Poly(p) => p.derivs.get(order).map(|d| d.eval(s)),
            Profile::Custom(_) => None,
        }
    }

    /// φ(s) on [−1, 1].
    #[inline]
    pub fn phi(&self, s: f64) -> f64 {
        self.derivative(s, 0)
    }

    /// Sign extension Φ.
    #[inline]
    pub fn big_phi(&self, s: f64) -> f64 {
        if s >= 1.0 {
            1.0
        } else if s <= -1.0 {
            -1.0
        } else {
            self.phi(s)
        }
    }

    /// φ^(order)(s), evaluated on [−1, 1]; derivatives of Φ vanish outside.
    pub fn derivative(&self, s: f64, order: usize) -> f64 {
        match &self.profile {
            Profile::Poly(p) => match p.derivs_f64.get(order) {
                Some(c) => horner(c, s),
                None => {
                    let d = p.phi.nth_derivative(order).to_f64();
                    horner(&d, s)
                }
            },
            Profile::Custom(f) => f(s, order),
        }
    }

    /// Φ'(s), zero outside (−1, 1). Evaluated through q' so that the
    /// high-order zero at ±1 keeps its relative accuracy.
    #[inline]
    pub fn big_phi_prime(&self, s: f64) -> f64 {
        if s.abs() >= 1.0 {
            return 0.0;
        }
        match &self.profile {
            Profile::Poly(p) => horner(&p.gap_prime_f64, 1.0 - s.abs()),
            Profile::Custom(f) => f(s, 1),
        }
    }

    /// 1 − Φ(s) computed without cancellation near s = 1.
    #[inline]
    pub fn one_minus(&self, s: f64) -> f64 {
        if s >= 1.0 {
            return 0.0;
        }
        if s <= -1.0 {
            return 2.0;
        }
        match &self.profile {
            Profile::Poly(p) => horner(&p.gap_f64, 1.0 - s),
            Profile::Custom(f) => 1.0 - f(s, 0),
        }
    }

    /// 1 + Φ(s) computed without cancellation near s = −1.
    #[inline]
    pub fn one_plus(&self, s: f64) -> f64 {
        self.one_minus(-s)
    }

    /// q(w) / w^n with q(w) = 1 − φ(1 − w); equals φ^{[n]} at w = 0.
    pub fn reduced_gap(&self, w: f64) -> f64 {
        match &self.profile {
            Profile::Poly(p) => horner(&p.gap_reduced_f64, w),
            Profile::Custom(f) => {
                let n = self.theorem_n() as i32;
                (1.0 - f(1.0 - w, 0)) / w.powi(n)
            }
        }
    }

    /// Solves 1 − φ(1 − w) = gap for w in [0, 2]; accurate for tiny gaps.
    pub fn solve_gap(&self, gap: f64) -> Result<f64> {
        if !(gap > 0.0 && gap < 2.0) {
            return Err(Error::OutOfRange {
                value: 1.0 - gap,
                range: "(-1, 1)",
            });
        }
        let q = |w: f64| self.one_minus(1.0 - w);
        let (mut lo, mut hi) = (0.0_f64, 2.0_f64);
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if q(mid) < gap {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 4.0 * f64::EPSILON * hi {
                break;
            }
        }
        let mut w = 0.5 * (lo + hi);
        // Newton polish in the gap variable; q' does not vanish for w > 0.
        if let Profile::Poly(p) = &self.profile {
            for _ in 0..3 {
                let dq = horner(&p.gap_prime_f64, w);
                if dq <= 0.0 {
                    break;
                }
                let step = (q(w) - gap) / dq;
                let next = w - step;
                if !(next > lo * 0.5 && next < hi * 2.0) {
                    break;
                }
                w = next;
            }
        }
        Ok(w)
    }

    /// φ⁻¹(v) for v in (−1, 1).
    pub fn inverse(&self, v: f64) -> Result<f64> {
        if !(v.abs() < 1.0) {
            return Err(Error::OutOfRange {
                value: v,
                range: "(-1, 1)",
            });
        }
        if v == 0.0 {
            return Ok(0.0);
        }
        if v < 0.0 {
            return self.inverse(-v).map(|s| -s);
        }
        let w = self.solve_gap(1.0 - v)?;
        let mut s = 1.0 - w;
        // Newton polish away from the edge, where φ' is bounded below.
        for _ in 0..3 {
            let d = self.derivative(s, 1);
            if d < 1e-3 {
                break;
            }
            let next = s - (self.phi(s) - v) / d;
            if !(next > -1.0 && next < 1.0) {
                break;
            }
            s = next;
        }
        Ok(s)
    }

    /// φ^{[n]} = (−1)^{n+1} φ^{(n)}(1) / n!.
    pub fn bracket_constant(&self, theorem_n: usize) -> Result<f64> {
        let value = match &self.profile {
            Profile::Poly(p) => {
                let d = p.phi.nth_derivative(theorem_n).eval(&Rational::one());
                if d.is_zero() {
                    return Err(Error::ClassMismatch { order: theorem_n });
                }
                let sign = if theorem_n % 2 == 1 {
                    rat(1, 1)
                } else {
                    rat(-1, 1)
                };
                rat_to_f64(&(sign * d / Rational::from_integer(factorial(theorem_n))))
            }
            Profile::Custom(f) => {
                let d = f(1.0, theorem_n);
                if d == 0.0 {
                    return Err(Error::ClassMismatch { order: theorem_n });
                }
                let fact: f64 = (1..=theorem_n).map(|i| i as f64).product();
                let sign = if theorem_n % 2 == 1 { 1.0 } else { -1.0 };
                sign * d / fact
            }
        };
        if value <= 0.0 {
            return Err(Error::ClassMismatch { order: theorem_n });
        }
        Ok(value)
    }

    /// Exact verification of the class conditions at ±1 plus positivity of φ'.
    pub fn verify(&self) -> ClassReport {
        let mut report = ClassReport {
            n_class: self.n_class,
            endpoints_exact: false,
            boundary_derivatives_vanish: false,
            top_derivative_nonzero: false,
            odd: false,
            monotone: self.is_monotone(),
        };
        if let Profile::Poly(p) = &self.profile {
            let one = Rational::one();
            let m_one = -one.clone();
            report.odd = p.phi.is_odd();
            report.endpoints_exact = p.phi.eval(&one) == one && p.phi.eval(&m_one) == m_one;
            report.boundary_derivatives_vanish = (1..=self.n_class)
                .all(|i| p.derivs[i].eval(&one).is_zero() && p.derivs[i].eval(&m_one).is_zero());
            let top = &p.derivs[self.n_class + 1];
            report.top_derivative_nonzero =
                !top.eval(&one).is_zero() && !top.eval(&m_one).is_zero();
        }
        report
    }

    /// φ' > 0 on (−1, 1): exact evaluation on a rational grid for polynomial
    /// profiles (floating evaluation cancels near ±1 for high classes).
    fn is_monotone(&self) -> bool {
        match &self.profile {
            Profile::Poly(p) => {
                let d = &p.derivs[1];
                (1..1000).all(|i| {
                    let s = Rational::new(BigInt::from(2 * i as i64 - 1000), BigInt::from(1000));
                    d.eval(&s).is_positive()
                })
            }
            Profile::Custom(_) => (1..4000).all(|i| {
                let s = -1.0 + 2.0 * i as f64 / 4000.0;
                self.derivative(s, 1) > 0.0
            }),
        }
    }

    /// Exact coefficient list of φ (index = power), for polynomial profiles.
    pub fn coefficients(&self) -> Option<Vec<Rational>> {
        self.poly().map(|p| p.coeffs().to_vec())
    }
}

/// Outcome of the exact class checks.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub struct ClassReport {
    pub n_class: usize,
    pub endpoints_exact: bool,
    pub boundary_derivatives_vanish: bool,
    pub top_derivative_nonzero: bool,
    pub odd: bool,
    pub monotone: bool,
}

impl ClassReport {
    pub fn all_hold(&self) -> bool {
        self.endpoints_exact
            && self.boundary_derivatives_vanish
            && self.top_derivative_nonzero
            && self.odd
            && self.monotone
    }
}

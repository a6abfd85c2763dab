//! Canonical local form X⁺ = (1, αx^{2k−1} + g(x) + yϑ(x, y)), X⁻ = (0, 1), h = y.

use num_traits::Zero;

use super::poly::{horner, rat, rat_from_f64, CompiledPoly2, Poly1, Poly2, Rational};
use super::{FilippovSystem, PlanarField, SwitchingFunction};
use crate::error::{Error, Result};

/// Data of the canonical form around a visible 2k-multiplicity contact.
#[derive(Clone, Debug)]
pub struct CanonicalForm {
    k: u32,
    alpha: Rational,
    g: Poly1,
    theta: Poly2,
    f: Poly2,
    f_c: CompiledPoly2,
    theta_c: CompiledPoly2,
    /// f(x, 0) and its x-derivative.
    f0: Vec<f64>,
    f0_prime: Vec<f64>,
}

impl CanonicalForm {
    /// Builds the form; `g` must have valuation at least 2k.
    pub fn new(k: u32, alpha: Rational, g: Poly1, theta: Poly2) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter(
                "k must be a positive integer".into(),
            ));
        }
        if alpha <= Rational::zero() {
            return Err(Error::InvalidParameter("alpha must be positive".into()));
        }
        if let Some(v) = g.valuation() {
            if v < 2 * k as usize {
                return Err(Error::BadValuation {
                    found: v,
                    required: 2 * k as usize,
                });
            }
        }
        let lead = Poly2::monomial(2 * k - 1, 0, alpha.clone());
        let f = &(&lead + &Poly2::from_poly1_x(&g)) + &(&Poly2::y() * &theta);
        let f0_poly = f.at_y_zero();
        Ok(CanonicalForm {
            k,
            f_c: f.compile(),
            theta_c: theta.compile(),
            f0: f0_poly.to_f64(),
            f0_prime: f0_poly.derivative().to_f64(),
            alpha,
            g,
            theta,
            f,
        })
    }

    /// g ≡ 0, ϑ ≡ 0.
    pub fn simple(k: u32, alpha: f64) -> Result<Self> {
        CanonicalForm::new(k, rat_from_f64(alpha), Poly1::zero(), Poly2::zero())
    }

    /// g ≡ 0 with constant ϑ.
    pub fn with_constant_theta(k: u32, alpha: f64, theta: f64) -> Result<Self> {
        CanonicalForm::new(
            k,
            rat_from_f64(alpha),
            Poly1::zero(),
            Poly2::constant(rat_from_f64(theta)),
        )
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn alpha(&self) -> f64 {
        super::poly::rat_to_f64(&self.alpha)
    }

    pub fn g(&self) -> &Poly1 {
        &self.g
    }

    pub fn theta_poly(&self) -> &Poly2 {
        &self.theta
    }

    /// Second component f(x, y) of X⁺.
    #[inline]
    pub fn f(&self, x: f64, y: f64) -> f64 {
        self.f_c.eval(x, y)
    }

    #[inline]
    pub fn f0(&self, x: f64) -> f64 {
        horner(&self.f0, x)
    }

    /// α(2k−1)x^{2k−2} + g'(x).
    #[inline]
    pub fn f0_prime(&self, x: f64) -> f64 {
        horner(&self.f0_prime, x)
    }

    #[inline]
    pub fn theta(&self, x: f64, y: f64) -> f64 {
        self.theta_c.eval(x, y)
    }

    /// g(x) / x^{2k−1}, polynomial because of the valuation condition.
    pub fn g_tilde(&self) -> Poly1 {
        self.g
            .shift_down(2 * self.k as usize - 1)
            .unwrap_or_else(Poly1::zero)
    }

    pub fn is_exact_case(&self) -> bool {
        self.g.is_zero() && self.theta.is_zero()
    }

    pub fn x_plus(&self) -> PlanarField {
        PlanarField::from_poly(Poly2::constant(rat(1, 1)), self.f.clone())
            .with_param("k", self.k as f64)
            .with_param("alpha", self.alpha())
    }

    pub fn system(&self) -> FilippovSystem {
        FilippovSystem::new(
            self.x_plus(),
            PlanarField::constant([0.0, 1.0]),
            SwitchingFunction::horizontal(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{contact_classification, Side};

    #[test]
    fn builds_field_and_checks_valuation() {
        let c =
            CanonicalForm::new(2, rat(2, 1), Poly1::monomial(5, rat(1, 1)), Poly2::zero()).unwrap();
        assert_eq!(c.f(0.5, 0.3), 2.0 * 0.125 + 0.5f64.powi(5));
        let z = c.system();
        let contact = contact_classification(&z.x_plus, &z.h, [0.0, 0.0], 8, Side::Plus).unwrap();
        assert_eq!(contact.multiplicity, 4);
        assert_eq!(contact.visible, Some(true));
        assert!(matches!(
            CanonicalForm::new(2, rat(1, 1), Poly1::monomial(3, rat(1, 1)), Poly2::zero()),
            Err(Error::BadValuation {
                found: 3,
                required: 4
            })
        ));
        assert_eq!(c.g_tilde(), Poly1::monomial(2, rat(1, 1)));
    }

    #[test]
    fn theta_enters_linearly_in_y() {
        let c = CanonicalForm::with_constant_theta(1, 1.0, -1.0).unwrap();
        assert_eq!(c.f(0.2, 0.1), 0.2 - 0.1);
        assert_eq!(c.f0_prime(0.3), 1.0);
    }
}

//! Concrete systems: the canonical local form and a polynomial field with a
//! hyperbolic boundary limit cycle tangent to Σ at the origin.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::field::poly::{rat, Poly1, Poly2, Rational};
use crate::field::{CanonicalForm, FilippovSystem, PlanarField, Point, SwitchingFunction};

/// X⁺ = (1, αx^{2k−1} + g(x) + yϑ(x, y)), X⁻ = (0, 1), h = y.
pub fn canonical_system(k: u32, alpha: Rational, g: Poly1, theta: Poly2) -> Result<FilippovSystem> {
    Ok(CanonicalForm::new(k, alpha, g, theta)?.system())
}

fn pow(p: &Poly2, e: u32) -> Poly2 {
    (0..e).fold(Poly2::constant(rat(1, 1)), |acc, _| &acc * p)
}

/// H = 1 − x^{2k} − (y−1)^{2k}; its zero set Γ is a cycle of X⁺.
pub fn cycle_curve(k: u32) -> Poly2 {
    let ym1 = &Poly2::y() - &Poly2::constant(rat(1, 1));
    let one = Poly2::constant(rat(1, 1));
    &(&one - &pow(&Poly2::x(), 2 * k)) - &pow(&ym1, 2 * k)
}

/// X⁺₁ = −x(x^{2k} − 1) + (y−1)^{2k−1}(x − xy − 1),
/// X⁺₂ = x^{2k−1} − (x^{2k} + (y−1)^{2k} − 1)(y−1).
pub fn boundary_cycle_field(k: u32) -> Result<PlanarField> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!(
            "the boundary-cycle example needs k > 1, got {k}"
        )));
    }
    let x = Poly2::x();
    let one = Poly2::constant(rat(1, 1));
    let ym1 = &Poly2::y() - &one;
    let x2k = pow(&x, 2 * k);
    let p1 =
        &(&-&x * &(&x2k - &one)) + &(&pow(&ym1, 2 * k - 1) * &(&(&x - &(&x * &Poly2::y())) - &one));
    let p2 = &pow(&x, 2 * k - 1) - &(&(&(&x2k + &pow(&ym1, 2 * k)) - &one) * &ym1);
    Ok(PlanarField::from_poly(p1, p2)
        .with_param("k", k as f64)
        .with_param("alpha", 1.0))
}

pub fn boundary_cycle_example(k: u32) -> Result<FilippovSystem> {
    Ok(FilippovSystem::new(
        boundary_cycle_field(k)?,
        PlanarField::constant([0.0, 1.0]),
        SwitchingFunction::horizontal(),
    ))
}

/// Both fields negated.
pub fn time_reversed(z: &FilippovSystem) -> FilippovSystem {
    FilippovSystem::new(z.x_plus.negated(), z.x_minus.negated(), z.h.clone())
}

/// The example with X⁺ reversed in time and mirrored by x ↦ −x; X⁻ stays
/// (0, 1), so the contact is again a visible fold but Γ is repelling.
pub fn unstable_boundary_cycle(k: u32) -> Result<FilippovSystem> {
    let f = boundary_cycle_field(k)?;
    let pf = f.poly().expect("polynomial field");
    let mirror = |p: &Poly2| -> Poly2 {
        Poly2::from_terms(p.terms().map(|(&(i, j), c)| {
            let c = if i % 2 == 1 { -c.clone() } else { c.clone() };
            ((i, j), c)
        }))
    };
    let p1 = mirror(pf.component(0));
    let p2 = -&mirror(pf.component(1));
    Ok(FilippovSystem::new(
        PlanarField::from_poly(p1, p2)
            .with_param("k", k as f64)
            .with_param("alpha", 1.0),
        PlanarField::constant([0.0, 1.0]),
        SwitchingFunction::horizontal(),
    ))
}

/// `points` samples of Γ = {H = 0} via a superellipse parametrization.
pub fn cycle_points(k: u32, points: usize) -> Vec<Point> {
    let p = 1.0 / k as f64;
    (0..points)
        .map(|i| {
            let t = std::f64::consts::TAU * i as f64 / points as f64;
            let (s, c) = t.sin_cos();
            [
                c.signum() * c.abs().powf(p),
                1.0 + s.signum() * s.abs().powf(p),
            ]
        })
        .collect()
}

/// max |⟨∇H, X⁺⟩| over the samples of Γ.
pub fn invariant_curve_residual(k: u32, points: usize) -> Result<f64> {
    let f = boundary_cycle_field(k)?;
    let h = cycle_curve(k);
    let (hx, hy) = (h.dx().compile(), h.dy().compile());
    Ok(cycle_points(k, points)
        .iter()
        .map(|&p| {
            let v = f.eval(p);
            (hx.eval(p[0], p[1]) * v[0] + hy.eval(p[0], p[1]) * v[1]).abs()
        })
        .fold(0.0, f64::max))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    Canonical,
    BoundaryCycle,
    BoundaryCycleReversed,
    BoundaryCycleUnstable,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Canonical => "canonical",
            Scenario::BoundaryCycle => "boundary-cycle",
            Scenario::BoundaryCycleReversed => "boundary-cycle-reversed",
            Scenario::BoundaryCycleUnstable => "boundary-cycle-unstable",
        }
    }

    /// The system for contact order 2k; `alpha` and `theta` apply to the
    /// canonical form only.
    pub fn system(self, k: u32, alpha: f64, theta: f64) -> Result<FilippovSystem> {
        match self {
            Scenario::Canonical => {
                Ok(CanonicalForm::with_constant_theta(k, alpha, theta)?.system())
            }
            Scenario::BoundaryCycle => boundary_cycle_example(k),
            Scenario::BoundaryCycleReversed => Ok(time_reversed(&boundary_cycle_example(k)?)),
            Scenario::BoundaryCycleUnstable => unstable_boundary_cycle(k),
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "canonical" => Ok(Scenario::Canonical),
            "boundary-cycle" => Ok(Scenario::BoundaryCycle),
            "boundary-cycle-reversed" => Ok(Scenario::BoundaryCycleReversed),
            "boundary-cycle-unstable" => Ok(Scenario::BoundaryCycleUnstable),
            other => Err(Error::InvalidParameter(format!(
                "unknown scenario '{other}'"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{contact_classification, Side};
    use approx::assert_abs_diff_eq;

    #[test]
    fn canonical_contacts() {
        let z = canonical_system(1, rat(1, 1), Poly1::zero(), Poly2::zero()).unwrap();
        let c = contact_classification(&z.x_plus, &z.h, [0.0, 0.0], 8, Side::Plus).unwrap();
        assert_eq!((c.multiplicity, c.visible), (2, Some(true)));
        let g = Poly1::monomial(5, rat(1, 1));
        let z = canonical_system(2, rat(2, 1), g, Poly2::zero()).unwrap();
        let c = contact_classification(&z.x_plus, &z.h, [0.0, 0.0], 8, Side::Plus).unwrap();
        assert_eq!((c.multiplicity, c.visible), (4, Some(true)));
        assert!(
            canonical_system(2, rat(1, 1), Poly1::monomial(3, rat(1, 1)), Poly2::zero()).is_err()
        );
        assert_eq!(z.x_minus.eval([0.3, -0.2]), [0.0, 1.0]);
    }

    #[test]
    fn cycle_is_invariant_with_constant_divergence() {
        for k in [2, 3] {
            assert!(invariant_curve_residual(k, 1000).unwrap() < 1e-12);
            let f = boundary_cycle_field(k).unwrap();
            for p in cycle_points(k, 200) {
                assert_abs_diff_eq!(f.divergence(p), -2.0 * k as f64, epsilon = 1e-10);
            }
            let min_speed = cycle_points(k, 1000)
                .iter()
                .map(|&p| {
                    let v = f.eval(p);
                    v[0].hypot(v[1])
                })
                .fold(f64::INFINITY, f64::min);
            assert!(min_speed > 0.1);
        }
        assert!(invariant_curve_residual(2, 1).unwrap() < 1e-12);
        assert!(boundary_cycle_example(1).is_err());
    }

    #[test]
    fn origin_is_visible_fold() {
        for k in [2, 3] {
            let z = boundary_cycle_example(k).unwrap();
            let c = contact_classification(&z.x_plus, &z.h, [0.0, 0.0], 10, Side::Plus).unwrap();
            assert_eq!((c.multiplicity, c.visible), (2 * k as usize, Some(true)));
            let u = unstable_boundary_cycle(k).unwrap();
            let c = contact_classification(&u.x_plus, &u.h, [0.0, 0.0], 10, Side::Plus).unwrap();
            assert_eq!((c.multiplicity, c.visible), (2 * k as usize, Some(true)));
            for p in cycle_points(k, 50) {
                assert_abs_diff_eq!(u.x_plus.divergence(p), 2.0 * k as f64, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn reversal() {
        let z = boundary_cycle_example(2).unwrap();
        let r = time_reversed(&z);
        let rr = time_reversed(&r);
        for p in [[0.1, 0.2], [-0.4, 1.3]] {
            assert_eq!(rr.x_plus.eval(p), z.x_plus.eval(p));
        }
        assert_abs_diff_eq!(r.x_plus.divergence([0.0, 2.0]), 4.0, epsilon = 1e-12);
        assert_eq!(r.x_minus.eval([0.0, 0.0])[1], -1.0);
        for s in [
            "canonical",
            "boundary-cycle",
            "boundary-cycle-reversed",
            "boundary-cycle-unstable",
        ] {
            assert_eq!(s.parse::<Scenario>().unwrap().name(), s);
        }
        assert!("nope".parse::<Scenario>().is_err());
    }
}

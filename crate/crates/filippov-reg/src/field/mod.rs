//! Planar vector fields, switching manifolds and Filippov classification.

pub mod canonical;
pub mod phi;
pub mod poly;

use std::collections::BTreeMap;
use std::sync::Arc;

use num_traits::Zero;

use crate::error::{Error, Result};
use poly::{rat_from_f64, rat_to_f64, CompiledPoly2, Poly2, Rational};

pub use canonical::CanonicalForm;
pub use phi::{phi_family, ClassReport, TransitionFunction};

pub type Point = [f64; 2];

/// Axis-aligned rectangle; the default is the whole plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Rect {
    pub const PLANE: Rect = Rect {
        x: (f64::NEG_INFINITY, f64::INFINITY),
        y: (f64::NEG_INFINITY, f64::INFINITY),
    };

    pub fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        Rect { x, y }
    }

    pub fn contains(&self, p: Point) -> bool {
        p[0] >= self.x.0 && p[0] <= self.x.1 && p[1] >= self.y.0 && p[1] <= self.y.1
    }

    pub fn intersect(&self, other: &Rect) -> Rect {
        Rect {
            x: (self.x.0.max(other.x.0), self.x.1.min(other.x.1)),
            y: (self.y.0.max(other.y.0), self.y.1.min(other.y.1)),
        }
    }
}

impl Default for Rect {
    fn default() -> Self {
        Rect::PLANE
    }
}

/// Exact polynomial form of a planar field with compiled partials.
#[derive(Debug)]
pub struct PolyField {
    components: [Poly2; 2],
    compiled: [CompiledPoly2; 2],
    jacobian: [[CompiledPoly2; 2]; 2],
}

impl PolyField {
    pub fn new(p: Poly2, q: Poly2) -> Self {
        let jacobian = [
            [p.dx().compile(), p.dy().compile()],
            [q.dx().compile(), q.dy().compile()],
        ];
        PolyField {
            compiled: [p.compile(), q.compile()],
            components: [p, q],
            jacobian,
        }
    }

    pub fn component(&self, i: usize) -> &Poly2 {
        &self.components[i]
    }

    pub fn eval(&self, p: Point) -> Point {
        [
            self.compiled[0].eval(p[0], p[1]),
            self.compiled[1].eval(p[0], p[1]),
        ]
    }

    pub fn jacobian(&self, p: Point) -> [[f64; 2]; 2] {
        let j = &self.jacobian;
        [
            [j[0][0].eval(p[0], p[1]), j[0][1].eval(p[0], p[1])],
            [j[1][0].eval(p[0], p[1]), j[1][1].eval(p[0], p[1])],
        ]
    }

    /// Parses the text form: sections `[X1]` and `[X2]`, each followed by
    /// rows `x_exp y_exp num den`. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows: [Vec<(usize, &str)>; 2] = [Vec::new(), Vec::new()];
        let mut current: Option<usize> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                current = match line.to_ascii_uppercase().as_str() {
                    "[X1]" => Some(0),
                    "[X2]" => Some(1),
                    other => {
                        return Err(Error::Parse {
                            line: idx + 1,
                            message: format!("unknown section {other}"),
                        })
                    }
                };
                continue;
            }
            match current {
                Some(c) => rows[c].push((idx + 1, line)),
                None => {
                    return Err(Error::Parse {
                        line: idx + 1,
                        message: "monomial row before any [X1]/[X2] section".into(),
                    })
                }
            }
        }
        let [r0, r1] = rows;
        Ok(PolyField::new(
            Poly2::parse_rows(r0)?,
            Poly2::parse_rows(r1)?,
        ))
    }

    pub fn to_text(&self) -> String {
        format!(
            "[X1]\n{}[X2]\n{}",
            self.components[0].to_rows(),
            self.components[1].to_rows()
        )
    }
}

type EvalFn = Arc<dyn Fn(Point) -> Point + Send + Sync>;

/// A smooth planar vector field, optionally with exact polynomial form.
#[derive(Clone)]
pub struct PlanarField {
    eval: EvalFn,
    poly: Option<Arc<PolyField>>,
    params: BTreeMap<String, f64>,
    domain: Rect,
}

impl std::fmt::Debug for PlanarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PlanarField")
            .field("poly", &self.poly.as_ref().map(|p| p.components.clone()))
            .field("params", &self.params)
            .field("domain", &self.domain)
            .finish()
    }
}

impl PlanarField {
    pub fn from_fn<F>(f: F) -> Self
    where
        F: Fn(Point) -> Point + Send + Sync + 'static,
    {
        PlanarField {
            eval: Arc::new(f),
            poly: None,
            params: BTreeMap::new(),
            domain: Rect::PLANE,
        }
    }

    pub fn from_poly(p: Poly2, q: Poly2) -> Self {
        let pf = Arc::new(PolyField::new(p, q));
        let inner = pf.clone();
        PlanarField {
            eval: Arc::new(move |pt| inner.eval(pt)),
            poly: Some(pf),
            params: BTreeMap::new(),
            domain: Rect::PLANE,
        }
    }

    pub fn from_poly_field(pf: PolyField) -> Self {
        let [p, q] = pf.components;
        PlanarField::from_poly(p, q)
    }

    /// Constant field with exact components.
    pub fn constant(v: Point) -> Self {
        PlanarField::from_poly(
            Poly2::constant(rat_from_f64(v[0])),
            Poly2::constant(rat_from_f64(v[1])),
        )
    }

    pub fn with_param(mut self, name: &str, value: f64) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }

    pub fn with_domain(mut self, domain: Rect) -> Self {
        self.domain = domain;
        self
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.get(name).copied()
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn domain(&self) -> Rect {
        self.domain
    }

    pub fn poly(&self) -> Option<&PolyField> {
        self.poly.as_deref()
    }

    #[inline]
    pub fn eval(&self, p: Point) -> Point {
        (self.eval)(p)
    }

    /// Jacobian `[[∂x X1, ∂y X1], [∂x X2, ∂y X2]]`.
    pub fn jacobian(&self, p: Point) -> [[f64; 2]; 2] {
        if let Some(pf) = &self.poly {
            return pf.jacobian(p);
        }
        let mut j = [[0.0; 2]; 2];
        for (c, col) in [0usize, 1].iter().enumerate() {
            let h = 1e-6 * (1.0 + p[*col].abs());
            let mut a = p;
            let mut b = p;
            a[*col] += h;
            b[*col] -= h;
            let fa = self.eval(a);
            let fb = self.eval(b);
            for r in 0..2 {
                j[r][c] = (fa[r] - fb[r]) / (2.0 * h);
            }
        }
        j
    }

    pub fn divergence(&self, p: Point) -> f64 {
        let j = self.jacobian(p);
        j[0][0] + j[1][1]
    }

    /// The field −X, keeping parameters and domain.
    pub fn negated(&self) -> Self {
        let mut out = match &self.poly {
            Some(pf) => PlanarField::from_poly(-pf.component(0), -pf.component(1)),
            None => {
                let f = self.eval.clone();
                PlanarField::from_fn(move |p| {
                    let v = f(p);
                    [-v[0], -v[1]]
                })
            }
        };
        out.params = self.params.clone();
        out.domain = self.domain;
        out
    }

    /// The field `c(x, y)·X` for a polynomial factor; poly form required.
    pub fn rescaled(&self, factor: &Poly2) -> Option<Self> {
        let pf = self.poly.as_ref()?;
        let mut out = PlanarField::from_poly(factor * pf.component(0), factor * pf.component(1));
        out.params = self.params.clone();
        out.domain = self.domain;
        Some(out)
    }
}

type ScalarFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(Point) -> Point + Send + Sync>;

/// Switching function h with gradient; Σ = h⁻¹(0).
#[derive(Clone)]
pub struct SwitchingFunction {
    h: ScalarFn,
    grad: GradFn,
    poly: Option<Poly2>,
}

impl std::fmt::Debug for SwitchingFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SwitchingFunction")
            .field("poly", &self.poly)
            .finish()
    }
}

impl SwitchingFunction {
    /// h(x, y) = y.
    pub fn horizontal() -> Self {
        SwitchingFunction::from_poly(Poly2::y())
    }

    pub fn from_poly(p: Poly2) -> Self {
        let c = p.compile();
        let gx = p.dx().compile();
        let gy = p.dy().compile();
        SwitchingFunction {
            h: Arc::new(move |q| c.eval(q[0], q[1])),
            grad: Arc::new(move |q| [gx.eval(q[0], q[1]), gy.eval(q[0], q[1])]),
            poly: Some(p),
        }
    }

    pub fn from_fn<H, G>(h: H, grad: G) -> Self
    where
        H: Fn(Point) -> f64 + Send + Sync + 'static,
        G: Fn(Point) -> Point + Send + Sync + 'static,
    {
        SwitchingFunction {
            h: Arc::new(h),
            grad: Arc::new(grad),
            poly: None,
        }
    }

    #[inline]
    pub fn eval(&self, p: Point) -> f64 {
        (self.h)(p)
    }

    #[inline]
    pub fn grad(&self, p: Point) -> Point {
        (self.grad)(p)
    }

    pub fn poly(&self) -> Option<&Poly2> {
        self.poly.as_ref()
    }

    pub fn is_horizontal(&self) -> bool {
        self.poly.as_ref() == Some(&Poly2::y())
    }
}

/// Filippov system Z = (X⁺, X⁻) with switching function h.
#[derive(Clone, Debug)]
pub struct FilippovSystem {
    pub x_plus: PlanarField,
    pub x_minus: PlanarField,
    pub h: SwitchingFunction,
}

/// Region of Σ by the signs of X⁺h and X⁻h.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaClass {
    Crossing,
    Sliding,
    Escaping,
    Tangency,
}

/// Which side of Σ a field lives on; visibility flips sign between sides.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Plus,
    Minus,
}

/// Contact order of a field with Σ at a point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Contact {
    pub multiplicity: usize,
    /// Reported only for even multiplicity.
    pub visible: Option<bool>,
}

const TOL_SECTION: f64 = 1e-9;

impl FilippovSystem {
    pub fn new(x_plus: PlanarField, x_minus: PlanarField, h: SwitchingFunction) -> Self {
        FilippovSystem { x_plus, x_minus, h }
    }

    pub fn domain(&self) -> Rect {
        self.x_plus.domain().intersect(&self.x_minus.domain())
    }

    /// Fields and switching function for regularization in the band |y| ≤ ε:
    /// h = y and X⁻ = (0, 1).
    pub fn is_canonical_switching(&self) -> bool {
        if !self.h.is_horizontal() {
            return false;
        }
        match self.x_minus.poly() {
            Some(pf) => {
                pf.component(0).is_zero()
                    && *pf.component(1) == Poly2::constant(Rational::from_integer(1.into()))
            }
            None => false,
        }
    }

    pub fn classify(&self, p: Point) -> Result<SigmaClass> {
        classify_sigma_point(self, p)
    }

    pub fn sliding_field(&self, p: Point) -> Result<Point> {
        sliding_field(self, p)
    }
}

/// Method used for a Lie derivative value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LieMethod {
    Exact,
    FiniteDifference,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LieValue {
    pub value: f64,
    pub method: LieMethod,
    /// Set when finite differences were used above order 3.
    pub precision_warning: bool,
}

/// Symbolic X^order h for polynomial data.
pub fn lie_derivative_poly(field: &PolyField, h: &Poly2, order: usize) -> Poly2 {
    let mut g = h.clone();
    for _ in 0..order {
        g = &(field.component(0) * &g.dx()) + &(field.component(1) * &g.dy());
    }
    g
}

/// X^order h(p): exact when both the field and h are polynomial, otherwise
/// nested central differences with Richardson extrapolation. Orders above 3
/// without a polynomial form are refused.
pub fn lie_derivative(
    field: &PlanarField,
    h: &SwitchingFunction,
    order: usize,
    p: Point,
) -> Result<f64> {
    lie_derivative_with(field, h, order, p, false).map(|v| v.value)
}

/// As [`lie_derivative`]; `allow_reduced` accepts finite differences above
/// order 3 and flags the result.
pub fn lie_derivative_with(
    field: &PlanarField,
    h: &SwitchingFunction,
    order: usize,
    p: Point,
    allow_reduced: bool,
) -> Result<LieValue> {
    if order == 0 {
        return Err(Error::InvalidParameter(
            "Lie derivative order must be >= 1".into(),
        ));
    }
    if !field.domain().contains(p) {
        return Err(Error::Domain { x: p[0], y: p[1] });
    }
    if let (Some(pf), Some(hp)) = (field.poly(), h.poly()) {
        let g = lie_derivative_poly(pf, hp, order);
        let value = g.eval(&rat_from_f64(p[0]), &rat_from_f64(p[1]));
        return Ok(LieValue {
            value: rat_to_f64(&value),
            method: LieMethod::Exact,
            precision_warning: false,
        });
    }
    if order > 3 && !allow_reduced {
        return Err(Error::PrecisionRequired { order });
    }
    let value = fd_lie(field, h, order, p);
    Ok(LieValue {
        value,
        method: LieMethod::FiniteDifference,
        precision_warning: order > 3,
    })
}

fn fd_lie(field: &PlanarField, h: &SwitchingFunction, order: usize, p: Point) -> f64 {
    if order == 0 {
        return h.eval(p);
    }
    if order == 1 {
        let g = h.grad(p);
        let v = field.eval(p);
        return g[0] * v[0] + g[1] * v[1];
    }
    // Directional derivative of X^{order-1}h along the frozen vector X(p).
    let v = field.eval(p);
    let norm = (v[0] * v[0] + v[1] * v[1]).sqrt().max(1e-300);
    let step = 2e-3 / norm.max(1.0);
    let central = |d: f64| {
        let a = [p[0] + d * v[0], p[1] + d * v[1]];
        let b = [p[0] - d * v[0], p[1] - d * v[1]];
        (fd_lie(field, h, order - 1, a) - fd_lie(field, h, order - 1, b)) / (2.0 * d)
    };
    let coarse = central(step);
    let fine = central(step / 2.0);
    (4.0 * fine - coarse) / 3.0
}

fn contact_tolerance(field: &PlanarField, h: &SwitchingFunction, p: Point) -> f64 {
    let v = field.eval(p);
    let g = h.grad(p);
    let scale = (v[0] * v[0] + v[1] * v[1]).sqrt() * (g[0] * g[0] + g[1] * g[1]).sqrt();
    1e-9 * if scale > 0.0 { scale } else { 1.0 }
}

/// Contact multiplicity of `field` with Σ at p and, for even multiplicity,
/// visibility (`side` selects the sign convention).
pub fn contact_classification(
    field: &PlanarField,
    h: &SwitchingFunction,
    p: Point,
    max_order: usize,
    side: Side,
) -> Result<Contact> {
    if max_order < 2 {
        return Err(Error::InvalidParameter("max_order must be >= 2".into()));
    }
    let tol = contact_tolerance(field, h, p);
    let exact = match (field.poly(), h.poly()) {
        (Some(pf), Some(hp)) => Some((pf, hp)),
        _ => None,
    };
    let (px, py) = (rat_from_f64(p[0]), rat_from_f64(p[1]));
    let mut g = exact.map(|(_, hp)| hp.clone());
    for order in 1..=max_order {
        let value = match (&exact, g.as_mut()) {
            (Some((pf, _)), Some(g)) => {
                *g = &(pf.component(0) * &g.dx()) + &(pf.component(1) * &g.dy());
                let v = g.eval(&px, &py);
                if v.is_zero() {
                    0.0
                } else {
                    rat_to_f64(&v)
                }
            }
            _ => lie_derivative(field, h, order, p)?,
        };
        if value.abs() > tol {
            let visible = if order % 2 == 0 {
                Some(match side {
                    Side::Plus => value > 0.0,
                    Side::Minus => value < 0.0,
                })
            } else {
                None
            };
            return Ok(Contact {
                multiplicity: order,
                visible,
            });
        }
    }
    Err(Error::UnresolvedContact { max_order })
}

/// Crossing, sliding, escaping or tangency at p ∈ Σ.
pub fn classify_sigma_point(z: &FilippovSystem, p: Point) -> Result<SigmaClass> {
    let residual = z.h.eval(p);
    if residual.abs() >= TOL_SECTION {
        return Err(Error::NotOnSigma { residual });
    }
    let a = lie_derivative(&z.x_plus, &z.h, 1, p)?;
    let b = lie_derivative(&z.x_minus, &z.h, 1, p)?;
    if a.abs() <= contact_tolerance(&z.x_plus, &z.h, p)
        || b.abs() <= contact_tolerance(&z.x_minus, &z.h, p)
    {
        return Ok(SigmaClass::Tangency);
    }
    Ok(if a * b > 0.0 {
        SigmaClass::Crossing
    } else if a < 0.0 {
        SigmaClass::Sliding
    } else {
        SigmaClass::Escaping
    })
}

/// Filippov sliding vector field (X⁻h·X⁺ − X⁺h·X⁻)/(X⁻h − X⁺h).
pub fn sliding_field(z: &FilippovSystem, p: Point) -> Result<Point> {
    let a = lie_derivative(&z.x_plus, &z.h, 1, p)?;
    let b = lie_derivative(&z.x_minus, &z.h, 1, p)?;
    let den = b - a;
    let scale = a.abs().max(b.abs()).max(1.0);
    if den.abs() < 1e-14 * scale {
        return Err(Error::DegenerateDenominator {
            context: "sliding field",
            value: den,
        });
    }
    let xp = z.x_plus.eval(p);
    let xm = z.x_minus.eval(p);
    Ok([(b * xp[0] - a * xm[0]) / den, (b * xp[1] - a * xm[1]) / den])
}

#[cfg(test)]
mod tests {
    use super::poly::rat;
    use super::*;

    fn canonical_k1() -> FilippovSystem {
        CanonicalForm::simple(1, 1.0).unwrap().system()
    }

    #[test]
    fn lie_derivatives_of_canonical_field() {
        let z = canonical_k1();
        assert_eq!(lie_derivative(&z.x_plus, &z.h, 1, [0.3, 0.0]).unwrap(), 0.3);
        assert_eq!(lie_derivative(&z.x_plus, &z.h, 2, [0.3, 0.0]).unwrap(), 1.0);
        assert_eq!(
            lie_derivative(&z.x_minus, &z.h, 1, [4.0, -2.0]).unwrap(),
            1.0
        );
    }

    #[test]
    fn finite_differences_refused_above_order_three() {
        let f = PlanarField::from_fn(|p| [1.0, p[0]]);
        let h = SwitchingFunction::horizontal();
        assert!(matches!(
            lie_derivative(&f, &h, 4, [0.0, 0.0]),
            Err(Error::PrecisionRequired { order: 4 })
        ));
        let v = lie_derivative_with(&f, &h, 4, [0.0, 0.0], true).unwrap();
        assert!(v.precision_warning);
        let v2 = lie_derivative(&f, &h, 2, [0.1, 0.0]).unwrap();
        assert!((v2 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn contact_of_canonical_field() {
        let z = canonical_k1();
        let c = contact_classification(&z.x_plus, &z.h, [0.0, 0.0], 6, Side::Plus).unwrap();
        assert_eq!(
            c,
            Contact {
                multiplicity: 2,
                visible: Some(true)
            }
        );
        let c = contact_classification(&z.x_plus, &z.h, [0.5, 0.0], 6, Side::Plus).unwrap();
        assert_eq!(c.multiplicity, 1);
        assert_eq!(c.visible, None);
    }

    #[test]
    fn unresolved_contact() {
        let f = PlanarField::constant([1.0, 0.0]);
        let h = SwitchingFunction::horizontal();
        assert!(matches!(
            contact_classification(&f, &h, [0.0, 0.0], 5, Side::Plus),
            Err(Error::UnresolvedContact { max_order: 5 })
        ));
    }

    #[test]
    fn sigma_regions_and_sliding() {
        let z = canonical_k1();
        assert_eq!(z.classify([-0.5, 0.0]).unwrap(), SigmaClass::Sliding);
        assert_eq!(z.classify([0.5, 0.0]).unwrap(), SigmaClass::Crossing);
        assert_eq!(z.classify([0.0, 0.0]).unwrap(), SigmaClass::Tangency);
        assert!(matches!(
            z.classify([0.0, 0.1]),
            Err(Error::NotOnSigma { .. })
        ));
        let s = z.sliding_field([-0.5, 0.0]).unwrap();
        assert!((s[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(s[1], 0.0);
        let rev = FilippovSystem::new(z.x_plus.negated(), z.x_minus.negated(), z.h.clone());
        assert_eq!(rev.classify([-0.5, 0.0]).unwrap(), SigmaClass::Escaping);
    }

    #[test]
    fn sliding_field_collapses_at_tangency() {
        let z = canonical_k1();
        let s = z.sliding_field([0.0, 0.0]).unwrap();
        assert_eq!(s, z.x_plus.eval([0.0, 0.0]));
    }

    #[test]
    fn poly_field_text_round_trip() {
        let text = "# field\n[X1]\n0 0 1 1\n[X2]\n1 0 1 1\n0 1 -3 2\n";
        let pf = PolyField::parse(text).unwrap();
        assert_eq!(pf.component(1).coeff(0, 1), rat(-3, 2));
        let again = PolyField::parse(&pf.to_text()).unwrap();
        assert_eq!(again.component(1), pf.component(1));
        assert!(PolyField::parse("1 0 1 1").is_err());
        assert!(PolyField::parse("[X3]\n").is_err());
    }

    #[test]
    fn negation_and_rescaling() {
        let z = canonical_k1();
        let n = z.x_plus.negated();
        assert_eq!(n.eval([0.2, 0.1]), [-1.0, -0.2]);
        let f = z.x_plus.rescaled(&Poly2::constant(rat(2, 1))).unwrap();
        assert_eq!(f.eval([0.2, 0.1]), [2.0, 0.4]);
    }
}

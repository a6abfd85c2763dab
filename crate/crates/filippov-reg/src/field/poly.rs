//! Exact rational polynomials in one and two variables.
//!
//! Coefficients are arbitrary-precision rationals so that boundary derivatives
//! of transition functions and high-order Lie derivatives can be evaluated
//! without rounding. Evaluation in `f64` goes through a compiled term list.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rational = BigRational;

/// `num / den` as an exact rational.
pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

/// Exact rational value of a finite double.
pub fn rat_from_f64(x: f64) -> Rational {
    Rational::from_float(x).unwrap_or_else(Rational::zero)
}

pub fn rat_to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

fn int_pow(x: &Rational, e: u32) -> Rational {
    num_traits::pow(x.clone(), e as usize)
}

/// Dense univariate polynomial; `coeffs[i]` multiplies `x^i`.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Poly1 {
    coeffs: Vec<Rational>,
}

impl Poly1 {
    pub fn zero() -> Self {
        Poly1 { coeffs: Vec::new() }
    }

    pub fn constant(c: Rational) -> Self {
        Poly1::from_coeffs(vec![c])
    }

    pub fn monomial(deg: usize, c: Rational) -> Self {
        let mut coeffs = vec![Rational::zero(); deg + 1];
        coeffs[deg] = c;
        Poly1::from_coeffs(coeffs)
    }

    pub fn from_coeffs(mut coeffs: Vec<Rational>) -> Self {
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        Poly1 { coeffs }
    }

    pub fn from_i64(coeffs: &[i64]) -> Self {
        Poly1::from_coeffs(coeffs.iter().map(|&c| rat(c, 1)).collect())
    }

    pub fn coeffs(&self) -> &[Rational] {
        &self.coeffs
    }

    pub fn coeff(&self, i: usize) -> Rational {
        self.coeffs.get(i).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree, `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    /// Index of the lowest nonzero coefficient, `None` for zero.
    pub fn valuation(&self) -> Option<usize> {
        self.coeffs.iter().position(|c| !c.is_zero())
    }

    pub fn is_odd(&self) -> bool {
        self.coeffs.iter().step_by(2).all(Zero::is_zero)
    }

    pub fn scale(&self, c: &Rational) -> Self {
        Poly1::from_coeffs(self.coeffs.iter().map(|a| a * c).collect())
    }

    pub fn derivative(&self) -> Self {
        Poly1::from_coeffs(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c * Rational::from_integer(BigInt::from(i)))
                .collect(),
        )
    }

    pub fn nth_derivative(&self, n: usize) -> Self {
        (0..n).fold(self.clone(), |p, _| p.derivative())
    }

    /// Antiderivative vanishing at zero.
    pub fn integral(&self) -> Self {
        let mut coeffs = vec![Rational::zero()];
        for (i, c) in self.coeffs.iter().enumerate() {
            coeffs.push(c / Rational::from_integer(BigInt::from(i + 1)));
        }
        Poly1::from_coeffs(coeffs)
    }

    pub fn eval(&self, x: &Rational) -> Rational {
        self.coeffs
            .iter()
            .rev()
            .fold(Rational::zero(), |acc, c| acc * x + c)
    }

    /// `p(a + b x)` as a polynomial in `x`.
    pub fn compose_affine(&self, a: &Rational, b: &Rational) -> Self {
        let lin = Poly1::from_coeffs(vec![a.clone(), b.clone()]);
        self.coeffs.iter().rev().fold(Poly1::zero(), |acc, c| {
            &(&acc * &lin) + &Poly1::constant(c.clone())
        })
    }

    /// Exact division by `x^v`; the low coefficients must vanish.
    pub fn shift_down(&self, v: usize) -> Option<Self> {
        if self.coeffs.iter().take(v).any(|c| !c.is_zero()) {
            return None;
        }
        Some(Poly1::from_coeffs(
            self.coeffs.iter().skip(v).cloned().collect(),
        ))
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.coeffs.iter().map(rat_to_f64).collect()
    }
}

impl Add for &Poly1 {
    type Output = Poly1;
    fn add(self, rhs: &Poly1) -> Poly1 {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Poly1::from_coeffs((0..n).map(|i| self.coeff(i) + rhs.coeff(i)).collect())
    }
}

impl Sub for &Poly1 {
    type Output = Poly1;
    fn sub(self, rhs: &Poly1) -> Poly1 {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Poly1::from_coeffs((0..n).map(|i| self.coeff(i) - rhs.coeff(i)).collect())
    }
}

impl Mul for &Poly1 {
    type Output = Poly1;
    fn mul(self, rhs: &Poly1) -> Poly1 {
        if self.is_zero() || rhs.is_zero() {
            return Poly1::zero();
        }
        let mut out = vec![Rational::zero(); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly1::from_coeffs(out)
    }
}

impl Neg for &Poly1 {
    type Output = Poly1;
    fn neg(self) -> Poly1 {
        Poly1::from_coeffs(self.coeffs.iter().map(|c| -c).collect())
    }
}

/// Horner evaluation of `f64` coefficients.
pub fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Sparse bivariate polynomial; key `(i, j)` is the monomial `x^i y^j`.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Poly2 {
    terms: BTreeMap<(u32, u32), Rational>,
}

impl Poly2 {
    pub fn zero() -> Self {
        Poly2::default()
    }

    pub fn constant(c: Rational) -> Self {
        Poly2::monomial(0, 0, c)
    }

    pub fn x() -> Self {
        Poly2::monomial(1, 0, Rational::one())
    }

    pub fn y() -> Self {
        Poly2::monomial(0, 1, Rational::one())
    }

    pub fn monomial(i: u32, j: u32, c: Rational) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert((i, j), c);
        }
        Poly2 { terms }
    }

    pub fn from_terms<I: IntoIterator<Item = ((u32, u32), Rational)>>(terms: I) -> Self {
        let mut p = Poly2::zero();
        for ((i, j), c) in terms {
            p.add_term(i, j, c);
        }
        p
    }

    /// Embeds `p(x)` as a bivariate polynomial.
    pub fn from_poly1_x(p: &Poly1) -> Self {
        Poly2::from_terms(
            p.coeffs()
                .iter()
                .enumerate()
                .map(|(i, c)| ((i as u32, 0), c.clone())),
        )
    }

    pub fn add_term(&mut self, i: u32, j: u32, c: Rational) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry((i, j)).or_insert_with(Rational::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.remove(&(i, j));
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&(u32, u32), &Rational)> {
        self.terms.iter()
    }

    pub fn coeff(&self, i: u32, j: u32) -> Rational {
        self.terms
            .get(&(i, j))
            .cloned()
            .unwrap_or_else(Rational::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn total_degree(&self) -> u32 {
        self.terms.keys().map(|(i, j)| i + j).max().unwrap_or(0)
    }

    pub fn scale(&self, c: &Rational) -> Self {
        Poly2::from_terms(self.terms.iter().map(|(&k, v)| (k, v * c)))
    }

    pub fn dx(&self) -> Self {
        Poly2::from_terms(
            self.terms
                .iter()
                .filter(|((i, _), _)| *i > 0)
                .map(|(&(i, j), c)| ((i - 1, j), c * Rational::from_integer(BigInt::from(i)))),
        )
    }

    pub fn dy(&self) -> Self {
        Poly2::from_terms(
            self.terms
                .iter()
                .filter(|((_, j), _)| *j > 0)
                .map(|(&(i, j), c)| ((i, j - 1), c * Rational::from_integer(BigInt::from(j)))),
        )
    }

    pub fn eval(&self, x: &Rational, y: &Rational) -> Rational {
        self.terms
            .iter()
            .fold(Rational::zero(), |acc, (&(i, j), c)| {
                acc + c * int_pow(x, i) * int_pow(y, j)
            })
    }

    /// Restriction `p(x, 0)` as a univariate polynomial.
    pub fn at_y_zero(&self) -> Poly1 {
        let deg = self.terms.keys().map(|(i, _)| *i).max().unwrap_or(0) as usize;
        let mut coeffs = vec![Rational::zero(); deg + 1];
        for (&(i, j), c) in &self.terms {
            if j == 0 {
                coeffs[i as usize] = c.clone();
            }
        }
        Poly1::from_coeffs(coeffs)
    }

    pub fn compile(&self) -> CompiledPoly2 {
        CompiledPoly2::new(self)
    }

    /// Parses rows `i j num den` (whitespace or comma separated).
    pub fn parse_rows<'a, I: IntoIterator<Item = (usize, &'a str)>>(rows: I) -> Result<Self> {
        let mut p = Poly2::zero();
        for (line, row) in rows {
            let fields: Vec<&str> = row
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .collect();
            if fields.len() != 4 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected 4 fields, found {}", fields.len()),
                });
            }
            let bad = |message: String| Error::Parse { line, message };
            let i: u32 = fields[0]
                .parse()
                .map_err(|e| bad(format!("x exponent: {e}")))?;
            let j: u32 = fields[1]
                .parse()
                .map_err(|e| bad(format!("y exponent: {e}")))?;
            let num: BigInt = fields[2]
                .parse()
                .map_err(|e| bad(format!("numerator: {e}")))?;
            let den: BigInt = fields[3]
                .parse()
                .map_err(|e| bad(format!("denominator: {e}")))?;
            if den.is_zero() {
                return Err(bad("zero denominator".into()));
            }
            p.add_term(i, j, Rational::new(num, den));
        }
        Ok(p)
    }

    /// Rows `i j num den`, one per monomial, in the format read by [`Poly2::parse_rows`].
    pub fn to_rows(&self) -> String {
        let mut out = String::new();
        for (&(i, j), c) in &self.terms {
            out.push_str(&format!("{i} {j} {} {}\n", c.numer(), c.denom()));
        }
        out
    }
}

impl Add for &Poly2 {
    type Output = Poly2;
    fn add(self, rhs: &Poly2) -> Poly2 {
        let mut out = self.clone();
        for (&(i, j), c) in &rhs.terms {
            out.add_term(i, j, c.clone());
        }
        out
    }
}

impl Sub for &Poly2 {
    type Output = Poly2;
    fn sub(self, rhs: &Poly2) -> Poly2 {
        let mut out = self.clone();
        for (&(i, j), c) in &rhs.terms {
            out.add_term(i, j, -c);
        }
        out
    }
}

impl Mul for &Poly2 {
    type Output = Poly2;
    fn mul(self, rhs: &Poly2) -> Poly2 {
        let mut out = Poly2::zero();
        for (&(i1, j1), a) in &self.terms {
            for (&(i2, j2), b) in &rhs.terms {
                out.add_term(i1 + i2, j1 + j2, a * b);
            }
        }
        out
    }
}

impl Neg for &Poly2 {
    type Output = Poly2;
    fn neg(self) -> Poly2 {
        self.scale(&-Rational::one())
    }
}

impl fmt::Display for Poly2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (&(i, j), c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({c})")?;
            if i > 0 {
                write!(f, "*x^{i}")?;
            }
            if j > 0 {
                write!(f, "*y^{j}")?;
            }
        }
        Ok(())
    }
}

const POW_TABLE: usize = 32;

/// `f64` evaluation form of a [`Poly2`].
#[derive(Clone, Debug, Default)]
pub struct CompiledPoly2 {
    terms: Vec<(u32, u32, f64)>,
    max_i: u32,
    max_j: u32,
}

impl CompiledPoly2 {
    pub fn new(p: &Poly2) -> Self {
        let terms: Vec<(u32, u32, f64)> = p
            .terms()
            .map(|(&(i, j), c)| (i, j, rat_to_f64(c)))
            .collect();
        let max_i = terms.iter().map(|t| t.0).max().unwrap_or(0);
        let max_j = terms.iter().map(|t| t.1).max().unwrap_or(0);
        CompiledPoly2 {
            terms,
            max_i,
            max_j,
        }
    }

    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        if self.max_i as usize >= POW_TABLE || self.max_j as usize >= POW_TABLE {
            return self
                .terms
                .iter()
                .map(|&(i, j, c)| c * x.powi(i as i32) * y.powi(j as i32))
                .sum();
        }
        let mut px = [1.0; POW_TABLE];
        let mut py = [1.0; POW_TABLE];
        for i in 1..=self.max_i as usize {
            px[i] = px[i - 1] * x;
        }
        for j in 1..=self.max_j as usize {
            py[j] = py[j - 1] * y;
        }
        self.terms
            .iter()
            .map(|&(i, j, c)| c * px[i as usize] * py[j as usize])
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poly1_calculus() {
        let p = Poly1::from_i64(&[1, 2, 3]);
        assert_eq!(p.derivative(), Poly1::from_i64(&[2, 6]));
        assert_eq!(p.integral().derivative(), p);
        assert_eq!(p.eval(&rat(2, 1)), rat(17, 1));
        let q = p.compose_affine(&rat(1, 1), &rat(-1, 1));
        // p(1 - x) = 6 - 8x + 3x^2
        assert_eq!(q, Poly1::from_i64(&[6, -8, 3]));
    }

    #[test]
    fn poly2_derivatives_and_eval() {
        let x = Poly2::x();
        let y = Poly2::y();
        let p = &(&(&x * &x) * &y) + &Poly2::constant(rat(3, 2));
        assert_eq!(p.dx(), (&Poly2::constant(rat(2, 1)) * &(&x * &y)));
        assert_eq!(p.dy(), &x * &x);
        assert_eq!(p.eval(&rat(2, 1), &rat(1, 3)), rat(4, 3) + rat(3, 2));
        let c = p.compile();
        assert!((c.eval(2.0, 1.0 / 3.0) - (4.0 / 3.0 + 1.5)).abs() < 1e-15);
    }

    #[test]
    fn rows_round_trip() {
        let text = "0 0 1 1\n3 1 -5 7\n";
        let p = Poly2::parse_rows(text.lines().enumerate()).unwrap();
        assert_eq!(p.coeff(3, 1), rat(-5, 7));
        let again = Poly2::parse_rows(p.to_rows().lines().enumerate()).unwrap();
        assert_eq!(p, again);
        assert!(Poly2::parse_rows([(1, "1 2 3")]).is_err());
        assert!(Poly2::parse_rows([(1, "1 2 3 0")]).is_err());
    }

    #[test]
    fn exact_double_conversion() {
        let r = rat_from_f64(0.1);
        assert_eq!(rat_to_f64(&r), 0.1);
        assert_ne!(r, rat(1, 10));
    }
}

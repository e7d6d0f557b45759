use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use super::monomial::Monomial;
use crate::error::{Error, Result};

/// Sparse multivariate polynomial with real coefficients.
///
/// Terms with a coefficient of exactly zero are never stored. Arithmetic
/// operators panic on mixed dimensions, which is a programming error; the
/// fallible entry points (`evaluate`, `lie_derivative`) return `Result`.
#[derive(Clone, PartialEq)]
pub struct Polynomial {
    dim: usize,
    terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self::term(Monomial::one(dim), c)
    }

    /// The coordinate function `x_{k+1}` (zero-based `k`).
    pub fn var(dim: usize, k: usize) -> Self {
        Self::term(Monomial::var(dim, k), 1.0)
    }

    pub fn term(m: Monomial, c: f64) -> Self {
        let mut p = Self::zero(m.dim());
        p.add_term(m, c);
        p
    }

    pub fn from_terms<I>(dim: usize, terms: I) -> Self
    where
        I: IntoIterator<Item = (Monomial, f64)>,
    {
        let mut p = Self::zero(dim);
        for (m, c) in terms {
            assert_eq!(m.dim(), dim, "monomial dimension mismatch");
            p.add_term(m, c);
        }
        p
    }

    /// Accumulates `c * m`, dropping the term if it cancels exactly.
    pub fn add_term(&mut self, m: Monomial, c: f64) {
        if c == 0.0 {
            return;
        }
        let entry = self.terms.entry(m);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = *o.get() + c;
                if s == 0.0 {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms in ascending graded order.
    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&Monomial, f64)> + '_ {
        self.terms.iter().map(|(m, c)| (m, *c))
    }

    pub fn coefficient(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    /// Total degree; zero for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    /// Smallest total degree of any stored term.
    pub fn min_degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).min().unwrap_or(0)
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        Ok(self.eval(x))
    }

    /// Evaluation without the dimension check, for hot loops whose caller
    /// already guarantees `x.len() == dim`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        self.terms.iter().map(|(m, c)| c * m.eval(x)).sum()
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        if s == 0.0 {
            return Polynomial::zero(self.dim);
        }
        Polynomial {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (m.clone(), c * s))
                .filter(|(_, c)| *c != 0.0)
                .collect(),
        }
    }

    pub fn pow(&self, e: u32) -> Polynomial {
        let mut out = Polynomial::constant(self.dim, 1.0);
        for _ in 0..e {
            out = &out * self;
        }
        out
    }

    /// Partial derivative with respect to `x_{k+1}`.
    pub fn partial(&self, k: usize) -> Polynomial {
        let mut out = Polynomial::zero(self.dim);
        for (m, c) in &self.terms {
            if let Some((e, q)) = m.derivative(k) {
                out.add_term(q, c * e as f64);
            }
        }
        out
    }

    pub fn gradient(&self) -> PolyVector {
        PolyVector {
            components: (0..self.dim).map(|k| self.partial(k)).collect(),
        }
    }

    /// `<grad self, f>` as a polynomial.
    pub fn lie_derivative(&self, f: &PolyVector) -> Result<Polynomial> {
        if f.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: f.len(),
            });
        }
        if let Some(c) = f.components.iter().find(|c| c.dim != self.dim) {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: c.dim,
            });
        }
        let mut out = Polynomial::zero(self.dim);
        for (k, fk) in f.components.iter().enumerate() {
            let dk = self.partial(k);
            if !dk.is_zero() && !fk.is_zero() {
                out = out + &dk * fk;
            }
        }
        Ok(out)
    }

    /// Copy with every term of magnitude below `threshold` removed. Meant for
    /// reporting only.
    pub fn cleaned(&self, threshold: f64) -> Polynomial {
        Polynomial {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .filter(|(_, c)| c.abs() >= threshold)
                .map(|(m, c)| (m.clone(), *c))
                .collect(),
        }
    }

    /// Copy without the constant term.
    pub fn without_constant(&self) -> Polynomial {
        let mut p = self.clone();
        p.terms.remove(&Monomial::one(self.dim));
        p
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.abs()))
    }

    /// Euclidean norm of the coefficient vector.
    pub fn coefficient_norm(&self) -> f64 {
        self.terms.values().map(|c| c * c).sum::<f64>().sqrt()
    }
}

/// Per-monomial differences `q - p`; empty exactly when `p` and `q` agree.
pub fn coefficients_equal(p: &Polynomial, q: &Polynomial) -> Vec<(Monomial, f64)> {
    assert_eq!(p.dim, q.dim, "polynomial dimension mismatch");
    (q - p).terms.into_iter().collect()
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (idx, (m, c)) in self.terms.iter().rev().enumerate() {
            let (sign, mag) = if *c < 0.0 { ("-", -c) } else { ("+", *c) };
            if idx == 0 {
                if sign == "-" {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            let coef = format_coefficient(mag);
            if m.is_constant() {
                write!(f, "{coef}")?;
            } else if mag == 1.0 {
                write!(f, "{m}")?;
            } else {
                write!(f, "{coef}*{m}")?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Polynomial[{}]({})", self.dim, self)
    }
}

fn format_coefficient(c: f64) -> String {
    // Shortest round-trip forms; switch to scientific outside a readable range.
    if c != 0.0 && !(1e-5..1e15).contains(&c) {
        format!("{c:e}")
    } else {
        format!("{c}")
    }
}

fn combine(a: &Polynomial, b: &Polynomial, sign: f64) -> Polynomial {
    assert_eq!(a.dim, b.dim, "polynomial dimension mismatch");
    let mut out = a.clone();
    for (m, c) in &b.terms {
        out.add_term(m.clone(), sign * c);
    }
    out
}

impl Add<&Polynomial> for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        combine(self, rhs, 1.0)
    }
}

impl Add<Polynomial> for Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: Polynomial) -> Polynomial {
        combine(&self, &rhs, 1.0)
    }
}

impl Add<&Polynomial> for Polynomial {
    type Output = Polynomial;
    fn add(mut self, rhs: &Polynomial) -> Polynomial {
        assert_eq!(self.dim, rhs.dim, "polynomial dimension mismatch");
        for (m, c) in &rhs.terms {
            self.add_term(m.clone(), *c);
        }
        self
    }
}

impl Sub<&Polynomial> for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        combine(self, rhs, -1.0)
    }
}

impl Sub<Polynomial> for Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: Polynomial) -> Polynomial {
        combine(&self, &rhs, -1.0)
    }
}

impl Mul<&Polynomial> for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        assert_eq!(self.dim, rhs.dim, "polynomial dimension mismatch");
        let mut out = Polynomial::zero(self.dim);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &rhs.terms {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        out
    }
}

impl Mul<Polynomial> for Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: Polynomial) -> Polynomial {
        &self * &rhs
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

impl Neg for Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

/// An ordered list of polynomials of one shared dimension, used for vector
/// fields and gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyVector {
    components: Vec<Polynomial>,
}

impl PolyVector {
    pub fn new(components: Vec<Polynomial>) -> Result<Self> {
        let n = components.len();
        for c in &components {
            if c.dim != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: c.dim,
                });
            }
        }
        Ok(Self { components })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            components: vec![Polynomial::zero(dim); dim],
        }
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Polynomial] {
        &self.components
    }

    pub fn component(&self, k: usize) -> &Polynomial {
        &self.components[k]
    }

    pub fn degree(&self) -> u32 {
        self.components.iter().map(Polynomial::degree).max().unwrap_or(0)
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(self.eval(x))
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.components.iter().map(|c| c.eval(x)).collect()
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.eval(x);
        }
    }

    pub fn scale(&self, s: f64) -> PolyVector {
        PolyVector {
            components: self.components.iter().map(|c| c.scale(s)).collect(),
        }
    }

    pub fn add(&self, other: &PolyVector) -> PolyVector {
        assert_eq!(self.dim(), other.dim(), "vector field dimension mismatch");
        PolyVector {
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    /// `<self, other>` as a polynomial.
    pub fn dot(&self, other: &PolyVector) -> Polynomial {
        assert_eq!(self.dim(), other.dim(), "vector field dimension mismatch");
        let mut out = Polynomial::zero(self.dim());
        for (a, b) in self.components.iter().zip(&other.components) {
            out = out + &(a * b);
        }
        out
    }
}

impl fmt::Display for PolyVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, c) in self.components.iter().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::parse;

    fn p(s: &str) -> Polynomial {
        parse(s, 2).unwrap()
    }

    fn motzkin() -> Polynomial {
        p("1 - 3*x1^2*x2^2 + x1^2*x2^4 + x1^4*x2^2")
    }

    #[test]
    fn evaluate_examples() {
        assert_eq!(p("x1^2 + x2^2").evaluate(&[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(motzkin().evaluate(&[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(motzkin().evaluate(&[2.0, 1.0]).unwrap(), 9.0);
        assert!(matches!(
            motzkin().evaluate(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn gradient_examples() {
        let g = p("x1^2 + x2^2").gradient();
        assert_eq!(g.component(0), &p("2*x1"));
        assert_eq!(g.component(1), &p("2*x2"));
        let g = p("3.5").gradient();
        assert!(g.components().iter().all(Polynomial::is_zero));
        let g = p("x1^3*x2").gradient();
        assert_eq!(g.component(0), &p("3*x1^2*x2"));
        assert_eq!(g.component(1), &p("x1^3"));
    }

    #[test]
    fn lie_derivative_examples() {
        let v = p("x1^2 + x2^2");
        let f = |a: &str, b: &str| PolyVector::new(vec![p(a), p(b)]).unwrap();
        assert_eq!(
            v.lie_derivative(&f("-x1", "-x2")).unwrap(),
            p("-2*x1^2 - 2*x2^2")
        );
        assert!(v.lie_derivative(&f("-x2", "x1")).unwrap().is_zero());
        assert_eq!(
            v.lie_derivative(&f("-x1", "-x2^3")).unwrap(),
            p("-2*x1^2 - 2*x2^4")
        );
    }

    #[test]
    fn coefficients_equal_examples() {
        assert!(coefficients_equal(&p("x1^2"), &p("x1^2")).is_empty());
        let r = coefficients_equal(&p("x1^2"), &p("x1^2 + 0.001*x1^2*x2^2"));
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].0, Monomial::new(vec![2, 2]));
        assert!((r[0].1 - 0.001).abs() < 1e-15);
        assert!(coefficients_equal(&Polynomial::zero(2), &Polynomial::zero(2)).is_empty());
    }

    #[test]
    fn cancellation_drops_terms() {
        let a = p("x1 + x2");
        let d = &a - &a;
        assert!(d.is_zero());
        assert_eq!(d.len(), 0);
    }

    #[test]
    fn cleanup_threshold() {
        let q = p("1e-5*x1 + 0.5*x2");
        assert_eq!(q.cleaned(1e-4), p("0.5*x2"));
    }
}

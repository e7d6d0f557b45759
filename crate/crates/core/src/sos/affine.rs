use std::collections::BTreeMap;

use crate::poly::{Monomial, PolyVector, Polynomial};

/// A scalar decision variable of an SOS program.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    /// Unconstrained scalar, e.g. a coefficient of `V_i` or of a free multiplier.
    Free(usize),
    /// Entry `(i, j)` with `i <= j` of Gram block `block`, indexed in the
    /// block's full (unreduced) basis.
    Gram { block: usize, i: usize, j: usize },
}

/// `constant + sum coeff * var`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AffineExpr {
    pub constant: f64,
    pub coeffs: BTreeMap<Var, f64>,
}

impl AffineExpr {
    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn var(v: Var, c: f64) -> Self {
        let mut e = Self::default();
        e.add_var(v, c);
        e
    }

    pub fn add_var(&mut self, v: Var, c: f64) {
        if c == 0.0 {
            return;
        }
        let slot = self.coeffs.entry(v).or_insert(0.0);
        *slot += c;
        if *slot == 0.0 {
            self.coeffs.remove(&v);
        }
    }

    pub fn add_scaled(&mut self, other: &AffineExpr, s: f64) {
        self.constant += s * other.constant;
        for (v, c) in &other.coeffs {
            self.add_var(*v, s * c);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.coeffs.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn eval(&self, value: &impl Fn(Var) -> f64) -> f64 {
        self.constant + self.coeffs.iter().map(|(v, c)| c * value(*v)).sum::<f64>()
    }
}

/// A polynomial whose coefficients are affine in the decision variables.
#[derive(Clone, Debug, PartialEq)]
pub struct AffinePoly {
    dim: usize,
    terms: BTreeMap<Monomial, AffineExpr>,
}

impl AffinePoly {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &AffineExpr)> + '_ {
        self.terms.iter()
    }

    pub fn coefficient(&self, m: &Monomial) -> Option<&AffineExpr> {
        self.terms.get(m)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn min_degree(&self) -> Option<u32> {
        self.terms.keys().map(Monomial::degree).min()
    }

    pub fn add_term(&mut self, m: Monomial, e: &AffineExpr, s: f64) {
        if s == 0.0 || e.is_zero() {
            return;
        }
        let slot = self.terms.entry(m.clone()).or_default();
        slot.add_scaled(e, s);
        if slot.is_zero() {
            self.terms.remove(&m);
        }
    }

    pub fn add_var_term(&mut self, m: Monomial, v: Var, c: f64) {
        self.add_term(m, &AffineExpr::var(v, c), 1.0);
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, other: &AffinePoly, s: f64) {
        assert_eq!(self.dim, other.dim, "affine polynomial dimension mismatch");
        for (m, e) in &other.terms {
            self.add_term(m.clone(), e, s);
        }
    }

    pub fn add_poly(&mut self, p: &Polynomial, s: f64) {
        assert_eq!(self.dim, p.dim(), "affine polynomial dimension mismatch");
        for (m, c) in p.terms() {
            self.add_term(m.clone(), &AffineExpr::constant(c), s);
        }
    }

    pub fn scale(&self, s: f64) -> AffinePoly {
        let mut out = AffinePoly::zero(self.dim);
        out.add_scaled(self, s);
        out
    }

    /// Product with a fixed polynomial.
    pub fn mul_poly(&self, p: &Polynomial) -> AffinePoly {
        assert_eq!(self.dim, p.dim(), "affine polynomial dimension mismatch");
        let mut out = AffinePoly::zero(self.dim);
        for (m, e) in &self.terms {
            for (mp, c) in p.terms() {
                out.add_term(m.mul(mp), e, c);
            }
        }
        out
    }

    pub fn partial(&self, k: usize) -> AffinePoly {
        let mut out = AffinePoly::zero(self.dim);
        for (m, e) in &self.terms {
            if let Some((exp, q)) = m.derivative(k) {
                out.add_term(q, e, exp as f64);
            }
        }
        out
    }

    /// `<grad self, f>` for a fixed vector field `f`.
    pub fn lie_derivative(&self, f: &PolyVector) -> AffinePoly {
        assert_eq!(self.dim, f.dim(), "vector field dimension mismatch");
        let mut out = AffinePoly::zero(self.dim);
        for (k, fk) in f.components().iter().enumerate() {
            if fk.is_zero() {
                continue;
            }
            out.add_scaled(&self.partial(k).mul_poly(fk), 1.0);
        }
        out
    }

    /// Substitutes values for all decision variables.
    pub fn evaluate(&self, value: &impl Fn(Var) -> f64) -> Polynomial {
        Polynomial::from_terms(
            self.dim,
            self.terms.iter().map(|(m, e)| (m.clone(), e.eval(value))),
        )
    }

    pub fn variables(&self) -> impl Iterator<Item = Var> + '_ {
        self.terms.values().flat_map(|e| e.coeffs.keys().copied())
    }
}

impl From<&Polynomial> for AffinePoly {
    fn from(p: &Polynomial) -> Self {
        let mut out = AffinePoly::zero(p.dim());
        out.add_poly(p, 1.0);
        out
    }
}

impl From<Polynomial> for AffinePoly {
    fn from(p: Polynomial) -> Self {
        AffinePoly::from(&p)
    }
}

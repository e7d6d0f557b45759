use std::cmp::Ordering;
use std::fmt;

/// A monomial `x1^e1 * ... * xn^en`, stored as its exponent vector.
///
/// Monomials are ordered graded-lexicographically: lower total degree first,
/// and within one degree `x1` dominates, so the degree-2 block of a
/// two-variable basis reads `x1^2, x1*x2, x2^2`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Monomial {
    exps: Vec<u32>,
}

impl Monomial {
    pub fn new(exps: Vec<u32>) -> Self {
        Self { exps }
    }

    pub fn one(dim: usize) -> Self {
        Self { exps: vec![0; dim] }
    }

    /// The single variable `x_{k+1}` (zero-based `k`).
    pub fn var(dim: usize, k: usize) -> Self {
        let mut exps = vec![0; dim];
        exps[k] = 1;
        Self { exps }
    }

    pub fn dim(&self) -> usize {
        self.exps.len()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exps
    }

    pub fn degree(&self) -> u32 {
        self.exps.iter().sum()
    }

    pub fn is_constant(&self) -> bool {
        self.exps.iter().all(|&e| e == 0)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        debug_assert_eq!(self.dim(), other.dim());
        Monomial {
            exps: self.exps.iter().zip(&other.exps).map(|(a, b)| a + b).collect(),
        }
    }

    /// Exact quotient `self / other`, if `other` divides `self`.
    pub fn div(&self, other: &Monomial) -> Option<Monomial> {
        let mut exps = Vec::with_capacity(self.exps.len());
        for (a, b) in self.exps.iter().zip(&other.exps) {
            exps.push(a.checked_sub(*b)?);
        }
        Some(Monomial { exps })
    }

    /// Returns `(e_k, x / x_k)` or `None` when `x_k` does not occur.
    pub fn derivative(&self, k: usize) -> Option<(u32, Monomial)> {
        let e = self.exps[k];
        if e == 0 {
            return None;
        }
        let mut exps = self.exps.clone();
        exps[k] -= 1;
        Some((e, Monomial { exps }))
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.exps
            .iter()
            .zip(x)
            .filter(|(e, _)| **e > 0)
            .map(|(e, v)| v.powi(*e as i32))
            .product()
    }

    /// True when every exponent is even, i.e. the monomial is a square.
    pub fn is_square(&self) -> bool {
        self.exps.iter().all(|e| e % 2 == 0)
    }

    pub fn sqrt(&self) -> Option<Monomial> {
        if !self.is_square() {
            return None;
        }
        Some(Monomial {
            exps: self.exps.iter().map(|e| e / 2).collect(),
        })
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.exps.cmp(&self.exps))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_constant() {
            return write!(f, "1");
        }
        let mut first = true;
        for (k, &e) in self.exps.iter().enumerate() {
            if e == 0 {
                continue;
            }
            if !first {
                write!(f, "*")?;
            }
            first = false;
            if e == 1 {
                write!(f, "x{}", k + 1)?;
            } else {
                write!(f, "x{}^{}", k + 1, e)?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// All monomials in `n` variables of total degree `lo..=hi`, in graded order.
pub fn monomials_in_range(n: usize, lo: u32, hi: u32) -> Vec<Monomial> {
    let mut out = Vec::new();
    for d in lo..=hi {
        let mut exps = vec![0u32; n];
        push_degree(&mut out, &mut exps, 0, d);
    }
    out
}

fn push_degree(out: &mut Vec<Monomial>, exps: &mut Vec<u32>, k: usize, left: u32) {
    let n = exps.len();
    if k + 1 == n {
        exps[k] = left;
        out.push(Monomial::new(exps.clone()));
        exps[k] = 0;
        return;
    }
    for e in (0..=left).rev() {
        exps[k] = e;
        push_degree(out, exps, k + 1, left - e);
    }
    exps[k] = 0;
}

/// Monomials of degree at most `d` (degree `1..=d` when the constant is
/// excluded), in the canonical graded order.
pub fn monomial_basis(n: usize, d: u32, include_constant: bool) -> Vec<Monomial> {
    let lo = if include_constant { 0 } else { 1 };
    if d < lo {
        return Vec::new();
    }
    monomials_in_range(n, lo, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binom(n: u64, k: u64) -> u64 {
        (1..=k).fold(1, |acc, i| acc * (n + 1 - i) / i)
    }

    #[test]
    fn basis_examples() {
        let b = monomial_basis(2, 1, true);
        let shown: Vec<String> = b.iter().map(|m| m.to_string()).collect();
        assert_eq!(shown, ["1", "x1", "x2"]);
        assert_eq!(monomial_basis(2, 2, true).len(), 6);
        assert_eq!(monomial_basis(2, 3, false).len(), 9);
    }

    #[test]
    fn basis_sizes_match_binomials() {
        for n in 1..=4usize {
            for d in 0..=6u32 {
                let with = monomial_basis(n, d, true);
                let without = monomial_basis(n, d, false);
                let expected = binom(n as u64 + d as u64, d as u64) as usize;
                assert_eq!(with.len(), expected);
                assert_eq!(without.len(), expected - 1);
                let mut sorted = with.clone();
                sorted.sort();
                sorted.dedup();
                assert_eq!(sorted, with, "basis must be sorted and distinct");
            }
        }
    }

    #[test]
    fn degree_two_order() {
        let b = monomials_in_range(2, 2, 2);
        let shown: Vec<String> = b.iter().map(|m| m.to_string()).collect();
        assert_eq!(shown, ["x1^2", "x1*x2", "x2^2"]);
    }
}

use std::collections::{BTreeMap, HashSet};

use nalgebra::DMatrix;

use super::affine::{AffineExpr, AffinePoly, Var};
use super::problem::{EqualityRow, PsdBlock, SdpProblem, SdpSolution, SdpVar};
use crate::error::{Error, Result};
use crate::poly::{monomial_basis, monomials_in_range, Monomial, Polynomial};

/// A generator polynomial of a constrained-positivity template together with
/// an optional override for its multiplier's degree.
#[derive(Clone, Debug)]
pub struct Generator {
    pub name: String,
    pub poly: Polynomial,
    pub multiplier_degree: Option<u32>,
}

/// Requirement that
/// `target - sum r_i a_i - sum s_j b_j - margin * margin_form` is SOS, with
/// free multipliers `r_i` on the equality generators `a_i` and SOS
/// multipliers `s_j` on the inequality generators `b_j`.
#[derive(Clone, Debug)]
pub struct PositivityConstraint {
    pub label: String,
    pub target: AffinePoly,
    pub equality_generators: Vec<Generator>,
    pub inequality_generators: Vec<Generator>,
    pub margin: f64,
    /// Polynomial multiplied by `margin`; `None` means the constant 1.
    pub margin_form: Option<Polynomial>,
    /// Maximum degree of every product in the identity. Defaults to the
    /// target degree rounded up to even.
    pub degree_cap: Option<u32>,
}

impl PositivityConstraint {
    pub fn new(label: impl Into<String>, target: impl Into<AffinePoly>) -> Self {
        Self {
            label: label.into(),
            target: target.into(),
            equality_generators: Vec::new(),
            inequality_generators: Vec::new(),
            margin: 0.0,
            margin_form: None,
            degree_cap: None,
        }
    }

    pub fn equality(mut self, name: impl Into<String>, poly: Polynomial) -> Self {
        self.equality_generators.push(Generator {
            name: name.into(),
            poly,
            multiplier_degree: None,
        });
        self
    }

    pub fn inequality(mut self, name: impl Into<String>, poly: Polynomial) -> Self {
        self.inequality_generators.push(Generator {
            name: name.into(),
            poly,
            multiplier_degree: None,
        });
        self
    }

    /// Sets the multiplier degree of the generator called `name`.
    pub fn multiplier_degree(mut self, name: &str, degree: u32) -> Self {
        for g in self
            .equality_generators
            .iter_mut()
            .chain(self.inequality_generators.iter_mut())
            .filter(|g| g.name == name)
        {
            g.multiplier_degree = Some(degree);
        }
        self
    }

    pub fn margin(mut self, margin: f64) -> Self {
        self.margin = margin;
        self
    }

    pub fn margin_form(mut self, form: Polynomial) -> Self {
        self.margin_form = Some(form);
        self
    }

    pub fn degree_cap(mut self, cap: u32) -> Self {
        self.degree_cap = Some(cap);
        self
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MultiplierKind {
    Free,
    Sos { block: usize },
}

#[derive(Clone, Debug)]
pub struct MultiplierHandle {
    pub name: String,
    pub generator: Polynomial,
    pub kind: MultiplierKind,
    pub poly: AffinePoly,
}

/// Where the pieces of one assembled constraint live in the program.
#[derive(Clone, Debug)]
pub struct ConstraintHandle {
    pub label: String,
    pub s0_block: usize,
    pub s0: AffinePoly,
    pub multipliers: Vec<MultiplierHandle>,
}

impl ConstraintHandle {
    /// All Gram blocks owned by the constraint, `s0` first.
    pub fn blocks(&self) -> Vec<usize> {
        let mut out = vec![self.s0_block];
        out.extend(self.multipliers.iter().filter_map(|m| match m.kind {
            MultiplierKind::Sos { block } => Some(block),
            MultiplierKind::Free => None,
        }));
        out
    }
}

#[derive(Clone, Debug)]
pub struct GramBlock {
    pub id: String,
    pub basis: Vec<Monomial>,
}

/// Incremental builder of an SOS feasibility program with shared unknowns.
#[derive(Clone, Debug)]
pub struct SosProgram {
    dim: usize,
    free_labels: Vec<String>,
    blocks: Vec<GramBlock>,
    rows: Vec<(String, Monomial, AffineExpr)>,
}

fn even_ceil(d: u32) -> u32 {
    d + d % 2
}

impl SosProgram {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            free_labels: Vec::new(),
            blocks: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[GramBlock] {
        &self.blocks
    }

    /// A polynomial over `basis` with one fresh free coefficient per monomial.
    pub fn free_poly(&mut self, label: &str, basis: &[Monomial]) -> AffinePoly {
        let mut p = AffinePoly::zero(self.dim);
        for m in basis {
            let id = self.free_labels.len();
            self.free_labels.push(format!("{label}[{m}]"));
            p.add_var_term(m.clone(), Var::Free(id), 1.0);
        }
        p
    }

    /// `Z^T Q Z` for a fresh Gram block `Q` over `basis`.
    pub fn sos_poly(&mut self, label: &str, basis: &[Monomial]) -> (usize, AffinePoly) {
        let block = self.blocks.len();
        self.blocks.push(GramBlock {
            id: label.to_string(),
            basis: basis.to_vec(),
        });
        let mut p = AffinePoly::zero(self.dim);
        for i in 0..basis.len() {
            for j in i..basis.len() {
                let c = if i == j { 1.0 } else { 2.0 };
                p.add_var_term(basis[i].mul(&basis[j]), Var::Gram { block, i, j }, c);
            }
        }
        (block, p)
    }

    /// Requires every coefficient of `p` to vanish.
    pub fn add_zero(&mut self, tag: &str, p: &AffinePoly) -> Result<()> {
        if p.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: p.dim(),
            });
        }
        for (m, e) in p.terms() {
            self.rows.push((tag.to_string(), m.clone(), e.clone()));
        }
        Ok(())
    }

    /// Adds the template identity of `c` with freshly allocated multipliers,
    /// following the default degree policy unless overridden.
    pub fn add_constraint(&mut self, c: &PositivityConstraint) -> Result<ConstraintHandle> {
        if c.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: c.dim(),
            });
        }
        let degree_error = |generator: &str, detail: String| Error::Degree {
            constraint: c.label.clone(),
            generator: generator.to_string(),
            detail,
        };
        if c.margin < 0.0 || !c.margin.is_finite() {
            return Err(Error::Configuration(format!(
                "{}: margin must be a non-negative number, got {}",
                c.label, c.margin
            )));
        }
        let margin_term = if c.margin > 0.0 {
            Some(
                c.margin_form
                    .clone()
                    .unwrap_or_else(|| Polynomial::constant(self.dim, 1.0))
                    .scale(c.margin),
            )
        } else {
            None
        };
        for g in c.equality_generators.iter().chain(&c.inequality_generators) {
            if g.poly.dim() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    found: g.poly.dim(),
                });
            }
        }

        let mut natural = c.target.degree();
        if let Some(m) = &margin_term {
            natural = natural.max(m.degree());
        }
        let cap = match c.degree_cap {
            Some(cap) => {
                if natural > cap {
                    return Err(degree_error(
                        "target",
                        format!("has degree {natural} above the declared cap {cap}"),
                    ));
                }
                cap
            }
            None => even_ceil(natural),
        };

        let mut expr = c.target.clone();
        let mut min_degree = c.target.min_degree();
        let mut note_min = |d: u32| {
            min_degree = Some(min_degree.map_or(d, |m: u32| m.min(d)));
        };
        if let Some(m) = &margin_term {
            expr.add_poly(m, -1.0);
            note_min(m.min_degree());
        }

        let mut multipliers = Vec::new();
        for g in &c.equality_generators {
            if g.poly.is_zero() {
                continue;
            }
            let dg = g.poly.degree();
            let dr = match g.multiplier_degree {
                Some(d) => d,
                None => cap.checked_sub(dg).ok_or_else(|| {
                    degree_error(&g.name, format!("has degree {dg} above the cap {cap}"))
                })?,
            };
            if dr + dg > cap {
                return Err(degree_error(
                    &g.name,
                    format!("times its degree-{dr} multiplier reaches degree {} above the cap {cap}", dr + dg),
                ));
            }
            let r = self.free_poly(
                &format!("{}/r[{}]", c.label, g.name),
                &monomial_basis(self.dim, dr, true),
            );
            expr.add_scaled(&r.mul_poly(&g.poly), -1.0);
            note_min(g.poly.min_degree());
            multipliers.push(MultiplierHandle {
                name: g.name.clone(),
                generator: g.poly.clone(),
                kind: MultiplierKind::Free,
                poly: r,
            });
        }
        for g in &c.inequality_generators {
            if g.poly.is_zero() {
                continue;
            }
            let dg = g.poly.degree();
            let ds = match g.multiplier_degree {
                Some(d) if d % 2 == 1 => {
                    return Err(degree_error(
                        &g.name,
                        format!("was given an odd SOS multiplier degree {d}"),
                    ))
                }
                Some(d) => d,
                None => {
                    let room = cap.checked_sub(dg).ok_or_else(|| {
                        degree_error(&g.name, format!("has degree {dg} above the cap {cap}"))
                    })?;
                    room - room % 2
                }
            };
            if ds + dg > cap {
                return Err(degree_error(
                    &g.name,
                    format!("times its degree-{ds} multiplier reaches degree {} above the cap {cap}", ds + dg),
                ));
            }
            let (block, s) = self.sos_poly(
                &format!("{}/s[{}]", c.label, g.name),
                &monomials_in_range(self.dim, 0, ds / 2),
            );
            expr.add_scaled(&s.mul_poly(&g.poly), -1.0);
            note_min(g.poly.min_degree());
            multipliers.push(MultiplierHandle {
                name: g.name.clone(),
                generator: g.poly.clone(),
                kind: MultiplierKind::Sos { block },
                poly: s,
            });
        }

        let lo = min_degree.unwrap_or(0).div_ceil(2);
        let hi = cap / 2;
        let basis = if lo <= hi {
            monomials_in_range(self.dim, lo, hi)
        } else {
            Vec::new()
        };
        let (s0_block, s0) = self.sos_poly(&format!("{}/s0", c.label), &basis);
        expr.add_scaled(&s0, -1.0);
        self.add_zero(&c.label, &expr)?;
        Ok(ConstraintHandle {
            label: c.label.clone(),
            s0_block,
            s0,
            multipliers,
        })
    }

    /// Freezes the program: removes Gram basis monomials that are forced to
    /// vanish and emits the conic problem.
    pub fn finish(self) -> AssembledProgram {
        let removed = diagonal_reduction(&self.rows);
        let mut kept = Vec::with_capacity(self.blocks.len());
        let mut problem_block = Vec::with_capacity(self.blocks.len());
        let mut problem = SdpProblem {
            scalars: self.free_labels.clone(),
            ..SdpProblem::default()
        };
        for (b, blk) in self.blocks.iter().enumerate() {
            let keep: Vec<usize> = (0..blk.basis.len())
                .filter(|&i| !removed.contains(&(b, i)))
                .collect();
            if keep.is_empty() {
                problem_block.push(None);
            } else {
                problem_block.push(Some(problem.blocks.len()));
                problem.blocks.push(PsdBlock {
                    id: blk.id.clone(),
                    size: keep.len(),
                });
            }
            kept.push(keep);
        }
        let reduced_index: Vec<BTreeMap<usize, usize>> = kept
            .iter()
            .map(|k| k.iter().enumerate().map(|(r, &i)| (i, r)).collect())
            .collect();
        let map_var = |v: Var| -> Option<SdpVar> {
            match v {
                Var::Free(k) => Some(SdpVar::Scalar(k)),
                Var::Gram { block, i, j } => {
                    let pb = problem_block[block]?;
                    let ri = *reduced_index[block].get(&i)?;
                    let rj = *reduced_index[block].get(&j)?;
                    Some(SdpVar::Entry {
                        block: pb,
                        i: ri.min(rj),
                        j: ri.max(rj),
                    })
                }
            }
        };
        let mut row_monomials = Vec::new();
        for (tag, m, e) in &self.rows {
            let terms: Vec<(SdpVar, f64)> = e
                .coeffs
                .iter()
                .filter_map(|(v, c)| map_var(*v).map(|sv| (sv, *c)))
                .collect();
            if terms.is_empty() && e.constant == 0.0 {
                continue;
            }
            problem.rows.push(EqualityRow {
                tag: tag.clone(),
                terms,
                rhs: -e.constant,
            });
            row_monomials.push(m.clone());
        }
        AssembledProgram {
            dim: self.dim,
            blocks: self.blocks,
            kept,
            problem_block,
            problem,
            row_monomials,
        }
    }
}

/// Iterated facial reduction: a row `sum c_k Q_kk = 0` whose live variables
/// are all diagonal Gram entries with coefficients of one sign forces those
/// entries, and hence their rows and columns, to zero.
fn diagonal_reduction(rows: &[(String, Monomial, AffineExpr)]) -> HashSet<(usize, usize)> {
    let mut removed: HashSet<(usize, usize)> = HashSet::new();
    let dead = |removed: &HashSet<(usize, usize)>, v: &Var| match *v {
        Var::Gram { block, i, j } => removed.contains(&(block, i)) || removed.contains(&(block, j)),
        Var::Free(_) => false,
    };
    loop {
        let mut changed = false;
        for (_, _, e) in rows {
            if e.constant != 0.0 {
                continue;
            }
            let mut sign = 0.0;
            let mut diag = Vec::new();
            let mut eligible = true;
            for (v, c) in &e.coeffs {
                if dead(&removed, v) {
                    continue;
                }
                match *v {
                    Var::Gram { block, i, j } if i == j => {
                        let s = c.signum();
                        if sign == 0.0 {
                            sign = s;
                        } else if s != sign {
                            eligible = false;
                            break;
                        }
                        diag.push((block, i));
                    }
                    _ => {
                        eligible = false;
                        break;
                    }
                }
            }
            if eligible && !diag.is_empty() {
                for d in diag {
                    changed |= removed.insert(d);
                }
            }
        }
        if !changed {
            return removed;
        }
    }
}

/// A frozen SOS program: the conic problem plus the bookkeeping needed to map
/// a solution back to polynomials.
#[derive(Clone, Debug)]
pub struct AssembledProgram {
    pub dim: usize,
    pub blocks: Vec<GramBlock>,
    /// Surviving basis indices of each full block.
    pub kept: Vec<Vec<usize>>,
    /// Index of each full block in `problem.blocks`, if it survived.
    pub problem_block: Vec<Option<usize>>,
    pub problem: SdpProblem,
    /// Monomial whose coefficient each problem row matches.
    pub row_monomials: Vec<Monomial>,
}

impl AssembledProgram {
    pub fn var_value(&self, v: Var, sol: &SdpSolution) -> f64 {
        match v {
            Var::Free(k) => sol.scalars[k],
            Var::Gram { block, i, j } => {
                let Some(pb) = self.problem_block[block] else {
                    return 0.0;
                };
                let keep = &self.kept[block];
                match (keep.binary_search(&i), keep.binary_search(&j)) {
                    (Ok(ri), Ok(rj)) => sol.blocks[pb][(ri, rj)],
                    _ => 0.0,
                }
            }
        }
    }

    pub fn evaluate(&self, p: &AffinePoly, sol: &SdpSolution) -> Polynomial {
        p.evaluate(&|v| self.var_value(v, sol))
    }

    /// Gram matrix of full block `block` on its reduced basis.
    pub fn gram(&self, block: usize, sol: &SdpSolution) -> (Vec<Monomial>, DMatrix<f64>) {
        let basis: Vec<Monomial> = self.kept[block]
            .iter()
            .map(|&i| self.blocks[block].basis[i].clone())
            .collect();
        let q = match self.problem_block[block] {
            Some(pb) => sol.blocks[pb].clone(),
            None => DMatrix::zeros(0, 0),
        };
        (basis, q)
    }

    /// Largest equality violation among rows tagged `tag`.
    pub fn residual_for(&self, tag: &str, sol: &SdpSolution) -> f64 {
        self.problem
            .rows
            .iter()
            .filter(|r| r.tag == tag)
            .map(|r| {
                let lhs: f64 = r.terms.iter().map(|(v, c)| c * sol.value(*v)).sum();
                (lhs - r.rhs).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Assembles independent constraints (no shared unknowns beyond their own
/// multipliers) into one program.
pub fn assemble(constraints: &[PositivityConstraint]) -> Result<(AssembledProgram, Vec<ConstraintHandle>)> {
    let dim = constraints.first().map_or(0, PositivityConstraint::dim);
    let mut program = SosProgram::new(dim);
    let mut handles = Vec::with_capacity(constraints.len());
    for c in constraints {
        handles.push(program.add_constraint(c)?);
    }
    Ok((program.finish(), handles))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::parse;

    #[test]
    fn single_quadratic_constraint() {
        let c = PositivityConstraint::new("q", parse("x1^2 + x2^2", 2).unwrap());
        let (prog, handles) = assemble(&[c]).unwrap();
        assert_eq!(prog.problem.blocks.len(), 1);
        assert_eq!(prog.problem.blocks[0].size, 2);
        assert_eq!(prog.blocks[handles[0].s0_block].basis.len(), 2);
        assert!(!prog.problem.rows.is_empty());
    }

    #[test]
    fn empty_list_is_empty_problem() {
        let (prog, handles) = assemble(&[]).unwrap();
        assert!(prog.problem.is_empty());
        assert!(handles.is_empty());
    }

    #[test]
    fn boundary_lie_constraint_degrees() {
        // Degree-8 target on the boundary x1*x2 = 0.
        let mut program = SosProgram::new(2);
        let v = program.free_poly("V", &monomial_basis(2, 6, false));
        let f = crate::poly::PolyVector::new(vec![
            parse("-0.5*x2", 2).unwrap(),
            parse("x1^3 - x2^3", 2).unwrap(),
        ])
        .unwrap();
        let target = v.lie_derivative(&f).scale(-1.0);
        assert_eq!(target.degree(), 8);
        let c = PositivityConstraint::new("b", target).equality("chi", parse("x1*x2", 2).unwrap());
        let h = program.add_constraint(&c).unwrap();
        assert_eq!(h.multipliers[0].poly.degree(), 6);
        let s0 = &program.blocks()[h.s0_block];
        assert!(s0.basis.iter().all(|m| m.degree() <= 4));
        assert_eq!(s0.basis.iter().map(|m| m.degree()).max(), Some(4));
    }

    #[test]
    fn degree_cap_violation_names_generator() {
        let c = PositivityConstraint::new("c", parse("x1^2", 1).unwrap())
            .inequality("b", parse("x1^2", 1).unwrap())
            .multiplier_degree("b", 2);
        match assemble(&[c]) {
            Err(Error::Degree { generator, .. }) => assert_eq!(generator, "b"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn every_product_monomial_has_a_row() {
        let c = PositivityConstraint::new("c", parse("x1^4 + x2^2 + 1", 2).unwrap())
            .inequality("b", parse("1 - x1^2", 2).unwrap())
            .equality("a", parse("x1 - x2", 2).unwrap());
        let mut program = SosProgram::new(2);
        let h = program.add_constraint(&c).unwrap();
        let mut monomials: HashSet<Monomial> = HashSet::new();
        for m in &h.multipliers {
            for (mono, _) in m.poly.mul_poly(&m.generator).terms() {
                monomials.insert(mono.clone());
            }
        }
        let rows: HashSet<Monomial> = program.rows.iter().map(|(_, m, _)| m.clone()).collect();
        assert!(monomials.is_subset(&rows));
    }
}

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};

use super::problem::{backend_by_name, min_eigenvalue, solve, SdpBackend, SolveStatus, SolverSettings};
use super::program::{assemble, AssembledProgram, ConstraintHandle, MultiplierKind, PositivityConstraint};
use super::SdpSolution;
use crate::error::{Error, Result};
use crate::poly::{Monomial, Polynomial};

/// `p = Z^T Q Z` over `basis`.
#[derive(Clone, Debug, PartialEq)]
pub struct GramRepresentation {
    pub basis: Vec<Monomial>,
    pub gram: DMatrix<f64>,
}

impl GramRepresentation {
    pub fn polynomial(&self, dim: usize) -> Polynomial {
        let mut p = Polynomial::zero(dim);
        let n = self.basis.len();
        for i in 0..n {
            for j in 0..n {
                p.add_term(self.basis[i].mul(&self.basis[j]), self.gram[(i, j)]);
            }
        }
        p
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.gram)
    }
}

/// Evidence that a set of polynomials are sums of squares.
#[derive(Clone, Debug)]
pub struct SosCertificate {
    pub dim: usize,
    pub gram_blocks: BTreeMap<String, GramRepresentation>,
    pub free_multipliers: BTreeMap<String, Polynomial>,
    pub residual_norm: f64,
    pub min_eigenvalues: BTreeMap<String, f64>,
}

impl SosCertificate {
    /// Collects the blocks and free multipliers of `handles` from a solution.
    pub fn from_solution(
        program: &AssembledProgram,
        handles: &[&ConstraintHandle],
        sol: &SdpSolution,
    ) -> Self {
        let mut gram_blocks = BTreeMap::new();
        let mut min_eigenvalues = BTreeMap::new();
        let mut free_multipliers = BTreeMap::new();
        let mut residual: f64 = 0.0;
        for h in handles {
            residual = residual.max(program.residual_for(&h.label, sol));
            for b in h.blocks() {
                let (basis, gram) = program.gram(b, sol);
                let rep = GramRepresentation { basis, gram };
                let id = program.blocks[b].id.clone();
                min_eigenvalues.insert(id.clone(), rep.min_eigenvalue());
                gram_blocks.insert(id, rep);
            }
            for m in &h.multipliers {
                if m.kind == MultiplierKind::Free {
                    free_multipliers.insert(
                        format!("{}/r[{}]", h.label, m.name),
                        program.evaluate(&m.poly, sol),
                    );
                }
            }
        }
        Self {
            dim: program.dim,
            gram_blocks,
            free_multipliers,
            residual_norm: residual,
            min_eigenvalues,
        }
    }

    pub fn worst_eigenvalue(&self) -> f64 {
        self.min_eigenvalues.values().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Outcome of a standalone SOS test.
#[derive(Clone, Debug)]
pub enum SosOutcome {
    Certified(SosCertificate),
    Failed { status: SolveStatus, detail: String },
}

impl SosOutcome {
    pub fn status(&self) -> SolveStatus {
        match self {
            SosOutcome::Certified(_) => SolveStatus::Feasible,
            SosOutcome::Failed { status, .. } => *status,
        }
    }

    pub fn certificate(&self) -> Option<&SosCertificate> {
        match self {
            SosOutcome::Certified(c) => Some(c),
            SosOutcome::Failed { .. } => None,
        }
    }
}

/// Searches for a Gram matrix of `p` with the default backend.
pub fn sos_decompose(p: &Polynomial) -> Result<SosOutcome> {
    let backend = backend_by_name("clarabel")?;
    sos_decompose_with(p, backend.as_ref(), &SolverSettings::default())
}

pub fn sos_decompose_with(
    p: &Polynomial,
    backend: &dyn SdpBackend,
    settings: &SolverSettings,
) -> Result<SosOutcome> {
    if p.is_zero() {
        return Err(Error::ZeroPolynomial);
    }
    let d = p.degree();
    if d % 2 == 1 {
        return Err(Error::OddDegree(d));
    }
    let c = PositivityConstraint::new("p", p);
    solve_constraints(&[c], backend, settings)
}

/// Solves independent positivity constraints jointly and packages the result.
pub fn solve_constraints(
    constraints: &[PositivityConstraint],
    backend: &dyn SdpBackend,
    settings: &SolverSettings,
) -> Result<SosOutcome> {
    let (program, handles) = assemble(constraints)?;
    let sol = solve(&program.problem, backend, settings)?;
    if sol.status != SolveStatus::Feasible {
        return Ok(SosOutcome::Failed {
            status: sol.status,
            detail: format!(
                "backend {} after {} iterations, residual {:.3e}",
                sol.backend_status, sol.iterations, sol.residual
            ),
        });
    }
    let refs: Vec<&ConstraintHandle> = handles.iter().collect();
    Ok(SosOutcome::Certified(SosCertificate::from_solution(
        &program, &refs, &sol,
    )))
}

/// Relative eigenvalue slack tolerated before extraction refuses a block.
pub const EXTRACTION_TOL: f64 = 1e-7;

/// Factors the Gram matrix of `block` into polynomials whose squares sum to
/// `Z^T Q Z`.
pub fn extract_sos_split(cert: &SosCertificate, block: &str) -> Result<Vec<Polynomial>> {
    let rep = cert
        .gram_blocks
        .get(block)
        .ok_or_else(|| Error::UnknownBlock(block.to_string()))?;
    split_gram(rep, cert.dim, block)
}

pub fn split_gram(rep: &GramRepresentation, dim: usize, label: &str) -> Result<Vec<Polynomial>> {
    let n = rep.basis.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let sym = (&rep.gram + rep.gram.transpose()) * 0.5;
    let scale = sym.norm();
    let eig = SymmetricEigen::new(sym);
    let mut out = Vec::new();
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam < -EXTRACTION_TOL * scale {
            return Err(Error::NumericalInfeasibility {
                block: label.to_string(),
                eigenvalue: lam,
            });
        }
        if lam <= 0.0 {
            continue;
        }
        let w = lam.sqrt();
        let v = eig.eigenvectors.column(k);
        let p = Polynomial::from_terms(
            dim,
            rep.basis.iter().zip(v.iter()).map(|(m, c)| (m.clone(), w * c)),
        );
        if !p.is_zero() {
            out.push(p);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::parse;

    fn p(s: &str) -> Polynomial {
        parse(s, 2).unwrap()
    }

    #[test]
    fn sum_of_two_squares() {
        let out = sos_decompose(&p("x1^2 + x2^2")).unwrap();
        let cert = out.certificate().expect("feasible");
        let rep = &cert.gram_blocks["p/s0"];
        assert_eq!(rep.basis.len(), 2);
        let id = DMatrix::<f64>::identity(2, 2);
        assert!((&rep.gram - id).norm() < 1e-6);
    }

    #[test]
    fn motzkin_is_rejected() {
        let out = sos_decompose(&p("1 - 3*x1^2*x2^2 + x1^2*x2^4 + x1^4*x2^2")).unwrap();
        assert_eq!(out.status(), SolveStatus::Infeasible);
    }

    #[test]
    fn explicit_squares_decompose() {
        let a = p("x1 + x2^2");
        let b = p("x1*x2 - 1");
        let target = &(&a * &a) + &(&b * &b);
        let out = sos_decompose(&target).unwrap();
        let cert = out.certificate().expect("feasible");
        assert!(cert.residual_norm <= 1e-7);
        let parts = extract_sos_split(cert, "p/s0").unwrap();
        let mut sum = Polynomial::zero(2);
        for q in &parts {
            sum = sum + &(q * q);
        }
        assert!((&sum - &target).coefficient_norm() <= 1e-6);
    }

    #[test]
    fn odd_and_zero_rejected_before_solving() {
        assert!(matches!(sos_decompose(&p("x1^3")), Err(Error::OddDegree(3))));
        assert!(matches!(
            sos_decompose(&Polynomial::zero(2)),
            Err(Error::ZeroPolynomial)
        ));
    }

    #[test]
    fn split_examples() {
        let basis = vec![Monomial::new(vec![1, 0]), Monomial::new(vec![0, 1])];
        let mk = |g: DMatrix<f64>| {
            let mut cert = SosCertificate {
                dim: 2,
                gram_blocks: BTreeMap::new(),
                free_multipliers: BTreeMap::new(),
                residual_norm: 0.0,
                min_eigenvalues: BTreeMap::new(),
            };
            cert.gram_blocks.insert(
                "q".into(),
                GramRepresentation {
                    basis: basis.clone(),
                    gram: g,
                },
            );
            cert
        };
        let parts = extract_sos_split(&mk(DMatrix::identity(2, 2)), "q").unwrap();
        assert_eq!(parts.len(), 2);
        let parts = extract_sos_split(&mk(DMatrix::from_element(2, 2, 1.0)), "q").unwrap();
        assert_eq!(parts.len(), 1);
        let sq = &parts[0] * &parts[0];
        assert!((&sq - &p("x1^2 + 2*x1*x2 + x2^2")).coefficient_norm() < 1e-12);

        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        assert!(matches!(
            extract_sos_split(&mk(bad), "q"),
            Err(Error::NumericalInfeasibility { .. })
        ));
        assert!(matches!(
            extract_sos_split(&mk(DMatrix::identity(2, 2)), "missing"),
            Err(Error::UnknownBlock(_))
        ));
    }
}

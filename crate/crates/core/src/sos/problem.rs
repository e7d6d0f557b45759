use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};

use super::clarabel::ClarabelBackend;
use crate::error::{Error, Result};

/// A scalar unknown of the conic program, indexed in the reduced blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SdpVar {
    Scalar(usize),
    /// Entry `(i, j)`, `i <= j`, of PSD block `block`.
    Entry { block: usize, i: usize, j: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PsdBlock {
    pub id: String,
    pub size: usize,
}

/// `sum coeff * var = rhs`, tagged with the constraint that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct EqualityRow {
    pub tag: String,
    pub terms: Vec<(SdpVar, f64)>,
    pub rhs: f64,
}

/// Block-structured conic program: find PSD blocks and free scalars that
/// satisfy the equality rows (minimising `objective`, which is usually empty).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SdpProblem {
    pub blocks: Vec<PsdBlock>,
    pub scalars: Vec<String>,
    pub rows: Vec<EqualityRow>,
    pub objective: Vec<(SdpVar, f64)>,
}

impl SdpProblem {
    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty() && self.scalars.is_empty() && self.rows.is_empty()
    }

    /// Checks that rows reference declared variables only and that blocks
    /// are non-empty.
    pub fn validate(&self) -> Result<()> {
        for b in &self.blocks {
            if b.size == 0 {
                return Err(Error::UnknownBlock(format!("{} has size 0", b.id)));
            }
        }
        let check = |v: &SdpVar| -> Result<()> {
            match *v {
                SdpVar::Scalar(k) if k >= self.scalars.len() => {
                    Err(Error::Backend(format!("row references undeclared scalar {k}")))
                }
                SdpVar::Entry { block, i, j } => match self.blocks.get(block) {
                    None => Err(Error::UnknownBlock(block.to_string())),
                    Some(b) if i > j || j >= b.size => Err(Error::Backend(format!(
                        "entry ({i}, {j}) outside block {} of size {}",
                        b.id, b.size
                    ))),
                    _ => Ok(()),
                },
                _ => Ok(()),
            }
        };
        for row in &self.rows {
            for (v, _) in &row.terms {
                check(v)?;
            }
        }
        for (v, _) in &self.objective {
            check(v)?;
        }
        Ok(())
    }

    pub fn num_entries(&self) -> usize {
        self.blocks.iter().map(|b| b.size * (b.size + 1) / 2).sum()
    }
}

/// Outcome vocabulary of a solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SolveStatus {
    /// Residual and eigenvalue checks pass at the feasibility tolerance.
    Feasible,
    /// Checks pass only at the looser marginal tolerance.
    Marginal,
    Infeasible,
    Unbounded,
    NumericalError,
    Timeout,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Feasible => "feasible",
            SolveStatus::Marginal => "marginal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::NumericalError => "numerical_error",
            SolveStatus::Timeout => "timeout",
        }
    }

    pub fn is_feasible(self) -> bool {
        self == SolveStatus::Feasible
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug)]
pub struct SolverSettings {
    /// Maximum equality residual and scaled eigenvalue slack for `Feasible`.
    pub feasibility_tol: f64,
    /// Looser bound separating `Marginal` from failure.
    pub marginal_tol: f64,
    pub max_iter: u32,
    /// Wall-clock limit in seconds.
    pub time_limit: f64,
    pub verbose: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-7,
            marginal_tol: 1e-5,
            max_iter: 500,
            time_limit: f64::INFINITY,
            verbose: false,
        }
    }
}

/// What a backend reports before the backend-independent acceptance checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackendOutcome {
    Converged,
    Infeasible,
    Unbounded,
    /// Stopped without a clean verdict (iteration cap, stall, numerics).
    Stalled,
    Timeout,
}

#[derive(Clone, Debug)]
pub struct RawSolution {
    pub outcome: BackendOutcome,
    pub scalars: Vec<f64>,
    pub blocks: Vec<DMatrix<f64>>,
    pub status_text: String,
    pub iterations: u32,
    pub solve_time: f64,
}

/// A pluggable conic solver.
pub trait SdpBackend: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, problem: &SdpProblem, settings: &SolverSettings) -> Result<RawSolution>;
}

/// Looks up a backend by name. Only `clarabel` ships natively.
pub fn backend_by_name(name: &str) -> Result<Box<dyn SdpBackend>> {
    match name {
        "clarabel" => Ok(Box::new(ClarabelBackend)),
        other => Err(Error::Configuration(format!(
            "SDP backend '{other}' is not available (known: clarabel)"
        ))),
    }
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub status: SolveStatus,
    pub scalars: Vec<f64>,
    pub blocks: Vec<DMatrix<f64>>,
    /// Largest absolute equality-row violation.
    pub residual: f64,
    pub min_eigenvalues: Vec<f64>,
    pub backend_status: String,
    pub iterations: u32,
    pub solve_time: f64,
}

impl SdpSolution {
    pub fn value(&self, v: SdpVar) -> f64 {
        match v {
            SdpVar::Scalar(k) => self.scalars[k],
            SdpVar::Entry { block, i, j } => self.blocks[block][(i, j)],
        }
    }
}

/// Solves `problem` with `backend` and classifies the result with checks that
/// do not trust the backend's own verdict.
pub fn solve(
    problem: &SdpProblem,
    backend: &dyn SdpBackend,
    settings: &SolverSettings,
) -> Result<SdpSolution> {
    problem.validate()?;
    if let Some(row) = problem
        .rows
        .iter()
        .find(|r| r.terms.is_empty() && r.rhs.abs() > settings.feasibility_tol)
    {
        return Ok(SdpSolution {
            status: SolveStatus::Infeasible,
            scalars: vec![0.0; problem.scalars.len()],
            blocks: problem.blocks.iter().map(|b| DMatrix::zeros(b.size, b.size)).collect(),
            residual: row.rhs.abs(),
            min_eigenvalues: vec![0.0; problem.blocks.len()],
            backend_status: format!("structurally inconsistent row in {}", row.tag),
            iterations: 0,
            solve_time: 0.0,
        });
    }
    if problem.is_empty() {
        return Ok(SdpSolution {
            status: SolveStatus::Feasible,
            scalars: Vec::new(),
            blocks: Vec::new(),
            residual: 0.0,
            min_eigenvalues: Vec::new(),
            backend_status: "empty problem".into(),
            iterations: 0,
            solve_time: 0.0,
        });
    }
    let raw = backend.solve(problem, settings)?;
    Ok(classify(problem, raw, settings))
}

pub fn min_eigenvalue(q: &DMatrix<f64>) -> f64 {
    if q.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(q.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn row_residual(problem: &SdpProblem, scalars: &[f64], blocks: &[DMatrix<f64>]) -> f64 {
    problem
        .rows
        .iter()
        .map(|r| {
            let lhs: f64 = r
                .terms
                .iter()
                .map(|(v, c)| {
                    c * match *v {
                        SdpVar::Scalar(k) => scalars[k],
                        SdpVar::Entry { block, i, j } => blocks[block][(i, j)],
                    }
                })
                .sum();
            (lhs - r.rhs).abs()
        })
        .fold(0.0, f64::max)
}

fn classify(problem: &SdpProblem, raw: RawSolution, settings: &SolverSettings) -> SdpSolution {
    let residual = row_residual(problem, &raw.scalars, &raw.blocks);
    let min_eigenvalues: Vec<f64> = raw.blocks.iter().map(min_eigenvalue).collect();
    let within = |tol: f64| {
        residual <= tol
            && raw
                .blocks
                .iter()
                .zip(&min_eigenvalues)
                .all(|(q, &lam)| lam >= -tol * q.norm())
    };
    let status = match raw.outcome {
        BackendOutcome::Infeasible => SolveStatus::Infeasible,
        BackendOutcome::Unbounded => SolveStatus::Unbounded,
        BackendOutcome::Timeout if !within(settings.marginal_tol) => SolveStatus::Timeout,
        _ if within(settings.feasibility_tol) => SolveStatus::Feasible,
        _ if within(settings.marginal_tol) => SolveStatus::Marginal,
        BackendOutcome::Timeout => SolveStatus::Timeout,
        _ => SolveStatus::NumericalError,
    };
    SdpSolution {
        status,
        scalars: raw.scalars,
        blocks: raw.blocks,
        residual,
        min_eigenvalues,
        backend_status: raw.status_text,
        iterations: raw.iterations,
        solve_time: raw.solve_time,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_entry(values: &[f64]) -> SdpProblem {
        SdpProblem {
            blocks: vec![PsdBlock {
                id: "q".into(),
                size: 1,
            }],
            scalars: vec![],
            rows: values
                .iter()
                .map(|&v| EqualityRow {
                    tag: "fix".into(),
                    terms: vec![(SdpVar::Entry { block: 0, i: 0, j: 0 }, 1.0)],
                    rhs: v,
                })
                .collect(),
            objective: vec![],
        }
    }

    #[test]
    fn trivially_feasible() {
        let backend = backend_by_name("clarabel").unwrap();
        let sol = solve(&single_entry(&[1.0]), backend.as_ref(), &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Feasible);
        assert!((sol.blocks[0][(0, 0)] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let backend = backend_by_name("clarabel").unwrap();
        let sol = solve(
            &single_entry(&[1.0, 2.0]),
            backend.as_ref(),
            &SolverSettings::default(),
        )
        .unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn unknown_backend_is_configuration_error() {
        assert!(matches!(
            backend_by_name("mosek"),
            Err(Error::Configuration(_))
        ));
    }

    #[test]
    fn empty_problem_is_feasible() {
        let backend = backend_by_name("clarabel").unwrap();
        let sol = solve(&SdpProblem::default(), backend.as_ref(), &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Feasible);
    }

    #[test]
    fn validation_rejects_undeclared_variables() {
        let mut p = single_entry(&[1.0]);
        p.rows[0].terms.push((SdpVar::Scalar(3), 1.0));
        assert!(p.validate().is_err());
    }
}

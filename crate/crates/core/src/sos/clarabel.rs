use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::DMatrix;

use super::problem::{BackendOutcome, RawSolution, SdpBackend, SdpProblem, SdpVar, SolverSettings};
use crate::error::{Error, Result};

/// Interior-point backend built on the `clarabel` crate.
///
/// Each PSD block is stored in the solver's scaled upper-triangle vector form
/// (column-major, off-diagonals multiplied by sqrt 2).
pub struct ClarabelBackend;

fn svec_index(i: usize, j: usize) -> usize {
    debug_assert!(i <= j);
    j * (j + 1) / 2 + i
}

impl SdpBackend for ClarabelBackend {
    fn name(&self) -> &'static str {
        "clarabel"
    }

    fn solve(&self, problem: &SdpProblem, settings: &SolverSettings) -> Result<RawSolution> {
        let sqrt2 = std::f64::consts::SQRT_2;
        let ns = problem.scalars.len();
        let mut offsets = Vec::with_capacity(problem.blocks.len());
        let mut nvar = ns;
        for b in &problem.blocks {
            offsets.push(nvar);
            nvar += b.size * (b.size + 1) / 2;
        }
        let column = |v: SdpVar, c: f64| -> (usize, f64) {
            match v {
                SdpVar::Scalar(k) => (k, c),
                SdpVar::Entry { block, i, j } => {
                    let col = offsets[block] + svec_index(i, j);
                    if i == j {
                        (col, c)
                    } else {
                        (col, c / sqrt2)
                    }
                }
            }
        };

        let m_eq = problem.rows.len();
        let (mut ri, mut ci, mut vals) = (Vec::new(), Vec::new(), Vec::new());
        let mut b = Vec::with_capacity(m_eq + nvar - ns);
        for (r, row) in problem.rows.iter().enumerate() {
            for &(v, c) in &row.terms {
                let (col, coef) = column(v, c);
                ri.push(r);
                ci.push(col);
                vals.push(coef);
            }
            b.push(row.rhs);
        }
        // s = 0 - (-I) y lies in the PSD cone.
        for (k, col) in (ns..nvar).enumerate() {
            ri.push(m_eq + k);
            ci.push(col);
            vals.push(-1.0);
            b.push(0.0);
        }
        let m = b.len();
        let a = CscMatrix::new_from_triplets(m, nvar, ri, ci, vals);
        let p = CscMatrix::<f64>::zeros((nvar, nvar));
        let mut q = vec![0.0; nvar];
        for &(v, c) in &problem.objective {
            let (col, coef) = column(v, c);
            q[col] += coef;
        }

        let mut cones = Vec::with_capacity(problem.blocks.len() + 1);
        if m_eq > 0 {
            cones.push(SupportedConeT::ZeroConeT(m_eq));
        }
        for blk in &problem.blocks {
            cones.push(SupportedConeT::PSDTriangleConeT(blk.size));
        }

        let st = DefaultSettingsBuilder::default()
            .verbose(settings.verbose)
            .max_iter(settings.max_iter)
            .time_limit(settings.time_limit)
            .tol_feas(1e-10)
            .tol_gap_abs(1e-10)
            .tol_gap_rel(1e-10)
            .build()
            .map_err(|e| Error::Backend(format!("clarabel settings: {e:?}")))?;
        let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, st)
            .map_err(|e| Error::Backend(format!("clarabel setup: {e:?}")))?;
        solver.solve();
        let sol = &solver.solution;

        let outcome = match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => BackendOutcome::Converged,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                BackendOutcome::Infeasible
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                BackendOutcome::Unbounded
            }
            SolverStatus::MaxTime => BackendOutcome::Timeout,
            _ => BackendOutcome::Stalled,
        };

        let x = &sol.x;
        let scalars = x[..ns].to_vec();
        let blocks = problem
            .blocks
            .iter()
            .zip(&offsets)
            .map(|(blk, &off)| {
                let n = blk.size;
                let mut g = DMatrix::zeros(n, n);
                for j in 0..n {
                    for i in 0..=j {
                        let y = x[off + svec_index(i, j)];
                        if i == j {
                            g[(i, i)] = y;
                        } else {
                            g[(i, j)] = y / sqrt2;
                            g[(j, i)] = y / sqrt2;
                        }
                    }
                }
                g
            })
            .collect();

        Ok(RawSolution {
            outcome,
            scalars,
            blocks,
            status_text: format!("{:?}", sol.status),
            iterations: sol.iterations,
            solve_time: sol.solve_time,
        })
    }
}

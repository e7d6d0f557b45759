use std::fmt;

use crate::error::{Error, Result};
use crate::poly::Polynomial;
use crate::sos::{
    solve_constraints, PositivityConstraint, SdpBackend, SolveStatus, SolverSettings, SosOutcome,
};
use crate::system::SwitchedSystem;

use super::{box_generators, square_form};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttractivityStatus {
    /// The SOS test succeeded for some vertex pair: sliding can occur and the
    /// cross-boundary conditions must be kept.
    AttractivePossible,
    /// The test failed for every vertex pair.
    NotAttractive,
    /// The solver gave no usable answer for at least one pair.
    Unknown,
}

impl AttractivityStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            AttractivityStatus::AttractivePossible => "attractive_possible",
            AttractivityStatus::NotAttractive => "not_attractive",
            AttractivityStatus::Unknown => "unknown",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "attractive_possible" => Some(Self::AttractivePossible),
            "not_attractive" => Some(Self::NotAttractive),
            "unknown" => Some(Self::Unknown),
            _ => None,
        }
    }
}

impl fmt::Display for AttractivityStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VertexPairResult {
    /// 1-based vertex indices in regions `i` and `j`.
    pub vertex_i: usize,
    pub vertex_j: usize,
    pub status: SolveStatus,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttractivityReport {
    pub pair: (usize, usize),
    pub status: AttractivityStatus,
    pub degree_cap: u32,
    pub vertex_results: Vec<VertexPairResult>,
}

impl fmt::Display for AttractivityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "pair ({}, {}): {}", self.pair.0, self.pair.1, self.status)?;
        for r in &self.vertex_results {
            writeln!(
                f,
                "  vertices ({}, {}): {} ({})",
                r.vertex_i, r.vertex_j, r.status, r.detail
            )?;
        }
        Ok(())
    }
}

/// SOS test for `-<grad chi, f_i><grad chi, f_j> - l chi - kappa*|x|^2` on
/// the box, for every pair of vertex fields across the boundary.
pub fn check_attractivity(
    sys: &SwitchedSystem,
    pair: (usize, usize),
    degree_cap: u32,
    kappa: f64,
    backend: &dyn SdpBackend,
    settings: &SolverSettings,
) -> Result<AttractivityReport> {
    let b = sys.boundary(pair.0, pair.1)?;
    if degree_cap % 2 == 1 {
        return Err(Error::Configuration(format!(
            "attractivity degree cap must be even, got {degree_cap}"
        )));
    }
    let (i, j) = b.pair();
    let grad = b.chi.gradient();
    let fi = sys.dynamics(i)?.vertices();
    let fj = sys.dynamics(j)?.vertices();
    let mut results = Vec::new();
    let mut cap_used = degree_cap;
    for (li, f) in fi.iter().enumerate() {
        let a = grad.dot(f);
        for (lj, g) in fj.iter().enumerate() {
            let c = grad.dot(g);
            let target: Polynomial = -(&a * &c);
            let natural = target.degree().max(2);
            let cap = degree_cap.max(natural + natural % 2);
            cap_used = cap_used.max(cap);
            let mut con = PositivityConstraint::new(format!("attr[{i},{j}][{},{}]", li + 1, lj + 1), target)
                .equality("chi", b.chi.clone())
                .margin(kappa)
                .margin_form(square_form(sys.dim(), 2))
                .degree_cap(cap);
            for (name, g) in box_generators(sys) {
                con = con.inequality(name, g);
            }
            let (status, detail) = match solve_constraints(&[con], backend, settings)? {
                SosOutcome::Certified(cert) => (
                    SolveStatus::Feasible,
                    format!("residual {:.3e}, min eigenvalue {:.3e}", cert.residual_norm, cert.worst_eigenvalue()),
                ),
                SosOutcome::Failed { status, detail } => (status, detail),
            };
            results.push(VertexPairResult {
                vertex_i: li + 1,
                vertex_j: lj + 1,
                status,
                detail,
            });
        }
    }
    let status = if results
        .iter()
        .any(|r| matches!(r.status, SolveStatus::Feasible | SolveStatus::Marginal))
    {
        AttractivityStatus::AttractivePossible
    } else if results
        .iter()
        .all(|r| r.status == SolveStatus::Infeasible)
    {
        AttractivityStatus::NotAttractive
    } else {
        AttractivityStatus::Unknown
    };
    Ok(AttractivityReport {
        pair: (i, j),
        status,
        degree_cap: cap_used,
        vertex_results: results,
    })
}

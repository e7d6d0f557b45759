//! Sum-of-squares programming: Gram parameterisation, constrained-positivity
//! templates, conic assembly and certificate extraction.

mod affine;
mod clarabel;
mod decompose;
mod problem;
mod program;

pub use affine::{AffineExpr, AffinePoly, Var};
pub use clarabel::ClarabelBackend;
pub use decompose::{
    extract_sos_split, solve_constraints, sos_decompose, sos_decompose_with, split_gram,
    GramRepresentation, SosCertificate, SosOutcome, EXTRACTION_TOL,
};
pub use problem::{
    backend_by_name, min_eigenvalue, row_residual, solve, BackendOutcome, EqualityRow, PsdBlock,
    RawSolution, SdpBackend, SdpProblem, SdpSolution, SdpVar, SolveStatus, SolverSettings,
};
pub use program::{
    assemble, AssembledProgram, ConstraintHandle, Generator, GramBlock, MultiplierHandle,
    MultiplierKind, PositivityConstraint, SosProgram,
};

//! Sparse multivariate polynomials over the reals.

mod monomial;
mod parse;
mod polynomial;

pub use monomial::{monomial_basis, monomials_in_range, Monomial};
pub use parse::{parse, parse_in};
pub use polynomial::{coefficients_equal, PolyVector, Polynomial};

/// Default magnitude below which coefficients are hidden in reports.
pub const DISPLAY_CLEANUP: f64 = 1e-4;

//! Stability certificates for polynomial switched systems on semi-algebraic
//! partitions.
//!
//! The crate searches for a piecewise polynomial Lyapunov family with
//! sum-of-squares programming, validates any candidate family by dense
//! sampling, and simulates Filippov solutions including sliding motion.

use openblas_src as _;

pub mod certify;
pub mod error;
pub mod io;
pub mod oracle;
pub mod poly;
pub mod sampling;
pub mod sim;
pub mod sos;
pub mod system;

pub use error::{Error, Result};

use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("parse error in {context} at column {column}: {message}")]
    Parse {
        context: String,
        column: usize,
        message: String,
    },

    #[error("invalid document: {0}")]
    Document(String),

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("unknown region {0}")]
    UnknownRegion(usize),

    #[error("unknown boundary ({0}, {1})")]
    UnknownBoundary(usize, usize),

    #[error("weights are not on the simplex: {0}")]
    OffSimplex(String),

    #[error("point {0:?} lies outside every region")]
    OutsideStateSpace(Vec<f64>),

    #[error("polynomial of odd degree {0} cannot be a sum of squares")]
    OddDegree(u32),

    #[error("zero polynomial has no sum-of-squares certificate")]
    ZeroPolynomial,

    #[error("degree bookkeeping violation in {constraint}: generator {generator} {detail}")]
    Degree {
        constraint: String,
        generator: String,
        detail: String,
    },

    #[error("unknown block {0}")]
    UnknownBlock(String),

    #[error("gram matrix {block} has eigenvalue {eigenvalue:e} below tolerance; refusing extraction")]
    NumericalInfeasibility { block: String, eigenvalue: f64 },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("solver backend failure: {0}")]
    Backend(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

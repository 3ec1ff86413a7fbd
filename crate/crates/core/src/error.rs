use thiserror::Error;

use crate::solver::ConvergenceReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("lattice truncation radius must be positive")]
    EmptyLattice,

    #[error("wavevector {0:?} lies outside the truncated lattice or is the zero mode")]
    OutsideLattice([i32; 3]),

    #[error("lattice specs differ: N={0} vs N={1}")]
    SpecMismatch(u32, u32),

    #[error("amplitude is not orthogonal to wavevector {0:?} (k·v = {1:e})")]
    NotDivergenceFree([i32; 3], f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("time grids differ")]
    GridMismatch,

    #[error("unknown quadrature rule `{0}`")]
    UnknownQuadrature(String),

    #[error("exponent out of range: {0}")]
    Range(String),

    #[error("zero field has no decay radius")]
    ZeroField,

    #[error("Picard iteration diverged after {} iterations", .0.iterations())]
    Diverged(Box<ConvergenceReport>),

    #[error("{0}")]
    Inadmissible(String),

    #[error("fixed-point bound violated: {0}")]
    BoundViolated(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

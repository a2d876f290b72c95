use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("branch slopes must satisfy sum(1/slope) = 1, got {0}")]
    SlopeSum(String),
    #[error("every slope must be an integer >= 2, got {0}")]
    SlopeRange(u64),
    #[error("branch endpoint {0} is not a multiple of 1/{1}")]
    PartitionAlignment(String, usize),
    #[error("map is not decomposable: {0}")]
    NotDecomposable(String),
    #[error("digit {0} out of range for base {1}")]
    DigitRange(u8, u64),
    #[error("negative weight {0} in cylinder table")]
    NegativeWeight(f64),
    #[error("measure oracle inconsistent: marginal defect {0} at string {1:?}")]
    InconsistentMeasure(f64, Vec<u8>),
    #[error("dimension {0} is not a power of {1}")]
    Size(usize, u64),
    #[error("tensor depth {0} smaller than the maximal branch shift {1}")]
    Depth(usize, u32),
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("non-finite sample while integrating observable")]
    Integration,
    #[error("smoothing width {0} too large for minimum interval length {1}")]
    DeltaTooLarge(f64, f64),
    #[error("power iteration stalled: Rayleigh bracket [{0}, {1}]")]
    Convergence(f64, f64),
    #[error("preimage endpoint {0} leaves the grid of size {1}")]
    Alignment(String, usize),
    #[error("map slopes are not all powers of a common integer base")]
    NotTp,
    #[error("lifted state fails the eigen-residual: {0}")]
    Residual(f64),
    #[error("vector is not an eigenvector: residual {0}")]
    NotEigenvector(f64),
    #[error("precondition failed: {0}")]
    Precond(String),
    #[error("state is not an eigenstate: residual {0}")]
    NotEigenstate(f64),
    #[error("eigensolver failed: {0}")]
    Eig(String),
}

pub type Result<T> = std::result::Result<T, Error>;

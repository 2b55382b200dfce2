use thiserror::Error;

/// Errors raised by the factorizations, decompositions and scheme builders.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("invalid dimensions: {0}")]
    InvalidDims(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("matrix is rank deficient (column {column}, norm {norm:e})")]
    RankDeficient { column: usize, norm: f64 },
    #[error("matrix is numerically singular")]
    Singular,
    #[error("iteration did not converge within {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("matrix is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),
    #[error("matrix is not positive semidefinite (smallest eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("matrix is not real-valued (max imaginary part {0:e})")]
    NotReal(f64),
    #[error("determinant moduli differ: {0:e} vs {1:e}")]
    DeterminantMismatch(f64, f64),
    #[error("determinant is not one: {0:e}")]
    DeterminantNotOne(f64),
    #[error("determinant modulus is not one: {0:e}")]
    DeterminantNotUnit(f64),
    #[error("exact joint GMD does not exist for this pair")]
    Infeasible,
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("block count {blocks} leaves no columns for block size {block_size}")]
    InsufficientBlocks { blocks: usize, block_size: usize },
    #[error("mutual informations differ: {0} vs {1} bits")]
    RateMismatch(f64, f64),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

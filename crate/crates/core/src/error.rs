use thiserror::Error;

/// Errors raised by the library. Every variant describes a violated
/// precondition; none of them signal a failed mathematical check.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("argument must be nonzero")]
    Zero,
    #[error("magnitude {0} is outside the supported range")]
    OutOfRange(i128),
    #[error("{0} is not odd")]
    NotOdd(i64),
    #[error("modulus {0} must be a positive odd integer")]
    BadModulus(i64),
    #[error("{0} is not square-free")]
    NotSquarefree(i64),
    #[error("{0} is not a fundamental discriminant")]
    NotFundamental(i64),
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("{0} and {1} are not coprime")]
    NotCoprime(i64, i64),
    #[error("kernel dimension {0} does not fit in a u64")]
    KernelOverflow(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors produced by the symbolic kernel and the operations built on it.
#[derive(Debug, Error)]
pub enum Error {
    #[error("context mismatch: {0}")]
    ContextMismatch(String),
    #[error("invalid context: {0}")]
    InvalidContext(String),
    #[error("unknown independent variable `{0}`")]
    UnknownIndependent(String),
    #[error("unknown name `{0}`")]
    UnknownName(String),
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("unassigned variable `{0}` in evaluation")]
    Unassigned(String),
    #[error("division by zero while evaluating a denominator")]
    DivisionByZero,
    #[error("divisor is not invertible: {0}")]
    NotInvertible(String),
    #[error("unsupported substitution into an exponential of `{0}`")]
    ExpSubstitution(String),
    #[error("space mismatch: {0}")]
    SpaceMismatch(String),
    #[error("parity mismatch: {0}")]
    ParityMismatch(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid equation: {0}")]
    InvalidEquation(String),
    #[error("on-shell reduction did not reach a fixed point within {0} rounds")]
    ReductionDepth(usize),
    #[error("expression is not in the image of d/d{dir}: {reason}")]
    NotInImage { dir: String, reason: String },
    #[error("not a variational gradient (Helmholtz check failed on component {0})")]
    NotVariational(usize),
    #[error("homotopy inversion does not support exponential atoms")]
    HomotopyExp,
    #[error("parameter fibres are not allowed here: {0}")]
    ParameterFibre(String),
    #[error("operator inverse verification failed: g∘g⁻¹ ≠ id")]
    BadInverse,
    #[error("operation requires {0}")]
    Unsupported(String),
    #[error("recursion obstruction at step {step}: {reason}")]
    Obstruction { step: usize, reason: String },
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

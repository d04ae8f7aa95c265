use thiserror::Error;

/// Broad failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Input,
    Numerical,
    Infeasible,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid increment spec: {0}")]
    InvalidSpec(String),

    #[error("increment coefficients overflow i64 (pattern {pattern}: order {order}); keep orders so that binomial products stay below 2^63")]
    CoefficientOverflow { pattern: usize, order: u32 },

    #[error("insufficient history: first computable output index is {first_computable}")]
    InsufficientHistory { first_computable: i64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid grid size {0}: must be a power of two >= 8")]
    InvalidGrid(usize),

    #[error("density is not positive definite at node {node} (lambda = {lambda:.6}): min eigenvalue {min_eig:.3e}")]
    NotPositiveDefinite { node: usize, lambda: f64, min_eig: f64 },

    #[error("density is singular at node {node} (lambda = {lambda:.6})")]
    SingularDensity { node: usize, lambda: f64 },

    #[error("transfer function vanishes at node {node}")]
    VanishingTransfer { node: usize },

    #[error("factorization did not converge after {iterations} iterations; residual history {history:?}")]
    NonConvergence { iterations: usize, history: Vec<f64> },

    #[error("singular leading coefficient: {0}")]
    SingularLeading(String),

    #[error("ill-conditioned operator window (condition estimate {condition:.3e}); increase truncation or window")]
    IllConditioned { condition: f64 },

    #[error("negative mean-square error {value:.3e} beyond tolerance; truncation too small")]
    NegativeError { value: f64 },

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("infeasible class: {0}")]
    Infeasible(String),

    #[error("invalid density: {0}")]
    InvalidDensity(String),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidSpec(_)
            | Error::CoefficientOverflow { .. }
            | Error::InsufficientHistory { .. }
            | Error::DimensionMismatch(_)
            | Error::InvalidGrid(_)
            | Error::OutOfRange(_)
            | Error::InvalidDensity(_) => ErrorClass::Input,
            Error::Infeasible(_) => ErrorClass::Infeasible,
            _ => ErrorClass::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the toricnet library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Malformed network source. Line and column are 1-based.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    /// The network is syntactically valid but not a Euclidean embedded graph
    /// (self-loop, duplicate edge, inconsistent dimensions).
    #[error("invalid network structure: {0}")]
    Structure(String),

    #[error("network is not weakly reversible: {0}")]
    NotWeaklyReversible(String),

    #[error("rate vector is not in the toric locus (residual {residual:.3e} > tolerance {tolerance:.3e})")]
    NotInToricLocus { residual: f64, tolerance: f64 },

    #[error("numerically singular system: {0}")]
    SingularSystem(String),

    #[error("no convergence after {iterations} iterations (gradient norm {grad_norm:.3e})")]
    MaxIterations { iterations: usize, grad_norm: f64 },

    #[error("degenerate basis: {0}")]
    DegenerateBasis(String),

    #[error("flux vector is not balanced at vertex {vertex} (defect {defect:.3e})")]
    UnbalancedFlux { vertex: usize, defect: f64 },

    #[error("state must be strictly positive (component {index} is {value})")]
    NonPositiveState { index: usize, value: f64 },

    #[error("rate constants must be strictly positive (edge {index} is {value})")]
    NonPositiveRate { index: usize, value: f64 },

    #[error("step size underflow at t = {t} (h = {h:.3e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("{what}: expected length {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("unknown rate parameter `${0}`")]
    UnknownParameter(String),
}

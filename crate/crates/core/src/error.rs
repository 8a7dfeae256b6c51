use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Tabulated kernel evaluated outside its sample range.
    #[error("extrapolation error: r = {r} outside tabulated range [0, {max}]")]
    Extrapolation { r: f64, max: f64 },

    /// Quadrature or root search failed to reach its tolerance.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Inputs violate an operation's contract (grid mismatch, infeasible bounds, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Invalid or inconsistent configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Expression syntax or evaluation error, positioned by byte offset.
    #[error("expression error at byte {offset}: {message}")]
    Expression { offset: usize, message: String },

    /// An iterative solver ran out of budget.
    #[error("no convergence after {iterations} iterations (residual {residual:e}, tolerance {tolerance:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        tolerance: f64,
    },

    /// A sampled structural condition does not hold.
    #[error("property failure: {0}")]
    Property(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

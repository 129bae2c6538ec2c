use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Arguments outside the operation's domain (bad indices, sizes, probabilities).
    #[error("domain error: {0}")]
    Domain(String),

    /// Mismatch between the dimensions of two inputs.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A factorization or positivity requirement failed.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The CLIME program has no feasible point at this λ.
    #[error("CLIME infeasible at lambda={lambda:e} (column {column}); smallest feasible lambda is at least {min_feasible_lambda:e}")]
    Infeasible {
        column: usize,
        lambda: f64,
        min_feasible_lambda: f64,
    },

    /// Penalized logistic regression did not reach the coordinate tolerance.
    #[error("PLR did not converge after {iterations} iterations (max KKT violation {max_kkt_violation:e})")]
    NotConverged {
        iterations: usize,
        max_kkt_violation: f64,
        last_coefficients: Vec<f64>,
    },

    /// A bootstrap replicate failed; carries the replicate id.
    #[error("replicate {replicate} failed: {source}")]
    Replicate {
        replicate: usize,
        #[source]
        source: Box<Error>,
    },
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

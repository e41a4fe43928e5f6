use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("time grids do not match: {0}")]
    GridMismatch(String),

    #[error("covariance matrix is not positive definite at leading minor {minor} (pivot {pivot:e})")]
    NotPositiveDefinite { minor: usize, pivot: f64 },

    #[error("circulant embedding has a negative eigenvalue {min_eigenvalue:e} (largest {max_eigenvalue:e})")]
    NegativeEigenvalue {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },

    #[error("hypergeometric series did not converge after {terms} terms (partial sum {partial_sum:e}, last term {last_term:e})")]
    Hypergeometric {
        terms: usize,
        partial_sum: f64,
        last_term: f64,
    },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    /// The explicit Euler scheme produced a non-finite state.
    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },

    #[error("rough regime unsupported: the Euler scheme requires H > 1/2, got H = {0}")]
    RoughRegime(f64),

    #[error("viability breach: V[{component}] = {value} is below the floor {floor}")]
    ViabilityBreach {
        component: usize,
        value: f64,
        floor: f64,
    },

    #[error("{breached} of {paths} paths breached the volatility floor (limit {limit})")]
    BreachRate {
        breached: usize,
        paths: usize,
        limit: f64,
    },

    #[error("viability conditions fail for the scenario: {0}")]
    Conditions(String),

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

use thiserror::Error;

/// Errors produced by the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of a function (e.g. `y <= 0`).
    #[error("domain error: {0}")]
    Domain(String),

    /// Evaluation at a point where the closed form is singular.
    #[error("singular point: {0}")]
    Singularity(String),

    /// Inputs violate a structural contract (symmetry, ordering, matching sizes).
    #[error("contract violation: {0}")]
    Contract(String),

    /// The Gram matrix failed its self-consistency check against direct quadrature.
    #[error("gram assembly failed: {0}")]
    Assembly(String),

    /// The regularized system could not be factored.
    #[error("linear solve failed: {0}")]
    Solver(String),

    /// The requested constraint level cannot be reached inside the lambda bracket.
    #[error("target M={target} not bracketed: M(lambda_lo={lambda_lo:e})={m_lo}, M(lambda_hi={lambda_hi:e})={m_hi}")]
    Bracket {
        target: f64,
        lambda_lo: f64,
        m_lo: f64,
        lambda_hi: f64,
        m_hi: f64,
    },

    /// Lookup of an unknown builtin, or an unparsable input.
    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Numerical failures (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Assembly(_) | Error::Solver(_) | Error::Bracket { .. }
        )
    }
}

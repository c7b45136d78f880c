use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("hyper-parameter {theta:?} lies outside the domain")]
    OutOfDomain { theta: Vec<f64> },

    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(String),

    #[error("ill-conditioned system ({what}): condition estimate {condition:e}")]
    IllConditioned { what: String, condition: f64 },

    #[error("degenerate state Gram on the observable subspace")]
    DegenerateStateGram,

    #[error("reduced basis stalled at {basis_size} functions with estimated error {achieved:e} (worst theta {worst_theta:?})")]
    RbNotConverged { achieved: f64, basis_size: usize, worst_theta: Vec<f64> },

    #[error("reduced basis certificate unavailable at theta {theta:?}")]
    CertificateFailed { theta: Vec<f64> },

    #[error("artifact was built for configuration {found}, expected {expected}")]
    StaleArtifact { expected: String, found: String },

    #[error("malformed artifact: {0}")]
    Format(String),
}

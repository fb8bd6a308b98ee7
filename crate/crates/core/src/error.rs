use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("covariance matrix is not positive definite after jitter {jitter:e}")]
    SingularCovariance { jitter: f64 },

    #[error("MCMC initial state has non-finite log posterior ({0})")]
    Init(String),

    #[error("MCMC chain failure: {0}")]
    ChainFailure(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("no feasible design: {0}")]
    InfeasibleDesign(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vector is not unit length (norm {norm})")]
    NotUnit { norm: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not antisymmetric (max deviation {0:e})")]
    NotAntisymmetric(f64),

    #[error("invalid rotation: {0}")]
    InvalidRotation(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("graph is not connected")]
    Disconnected,

    #[error("gain argument s = {0} lies outside [0, 2]")]
    GainDomain(f64),

    #[error("invalid gain: {0}")]
    InvalidGain(String),

    #[error("configuration is not an equilibrium (residual {0:e})")]
    NotEquilibrium(f64),

    #[error("state became non-finite at t = {time:.3e} (step size too large?)")]
    NonFinite { time: f64 },

    #[error("symmetric eigensolver did not converge after {0} sweeps")]
    NoConvergence(usize),

    #[error("internal consistency failure: {0}")]
    Internal(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    /// Errors that stem from the numerics rather than from user input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. } | Error::NoConvergence(_) | Error::Internal(_)
        )
    }
}

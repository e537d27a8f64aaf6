use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument fell outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite observation at unmasked step {step}")]
    NonFiniteObservation { step: usize },

    #[error("innovation variance {variance:e} is not positive at step {step}")]
    NonPositiveInnovation { step: usize, variance: f64 },

    #[error("predicted covariance at step {step} stayed singular after {attempts} jitter attempts")]
    SingularCovariance { step: usize, attempts: usize },

    #[error("model spectrum is not positive at bin {bin} (value {value:e})")]
    NonPositiveSpectrum { bin: usize, value: f64 },

    #[error("dense GP oracle refused: {len} samples exceeds the limit of {limit}")]
    OracleTooLarge { len: usize, limit: usize },

    #[error("objective is not finite at the initial parameters")]
    NonFiniteObjective,
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

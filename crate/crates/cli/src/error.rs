use std::path::Path;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Failures grouped by the exit code they map to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 1,
            Self::Data(_) => 2,
            Self::Numerical(_) => 3,
        }
    }

    pub(crate) fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        Self::Data(format!("{}: {err}", path.display()))
    }
}

impl From<probfb::Error> for CliError {
    fn from(err: probfb::Error) -> Self {
        use probfb::Error as E;
        match err {
            E::NonPositiveInnovation { .. }
            | E::SingularCovariance { .. }
            | E::NonPositiveSpectrum { .. }
            | E::NonFiniteObjective => Self::Numerical(err.to_string()),
            E::Domain(_) | E::NonFiniteObservation { .. } | E::OracleTooLarge { .. } => Self::Data(err.to_string()),
        }
    }
}

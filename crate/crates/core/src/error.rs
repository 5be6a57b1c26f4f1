use thiserror::Error;

use crate::estimator::EstimatorError;
use crate::photodynamics::PhotoError;
use crate::spin::SpinError;
use crate::studies::StudyError;
use crate::tomography::TomographyError;
use crate::types::TypeError;

/// Any failure raised by the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Spin(#[from] SpinError),
    #[error(transparent)]
    Photo(#[from] PhotoError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Tomography(#[from] TomographyError),
    #[error(transparent)]
    Study(#[from] StudyError),
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// True for errors caused by bad input (configuration, files, shapes)
    /// rather than by a failure during computation.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Spin(e) => matches!(e, SpinError::InvalidField(_) | SpinError::InvalidScan { .. } | SpinError::InvalidLabel { .. }),
            Error::Photo(e) => matches!(
                e,
                PhotoError::NonPhysicalConfig(_) | PhotoError::InvalidStep { .. } | PhotoError::InvalidPopulation | PhotoError::Type(_)
            ),
            Error::Estimator(e) => matches!(e, EstimatorError::DimensionMismatch { .. } | EstimatorError::ZeroVector),
            Error::Tomography(e) => matches!(
                e,
                TomographyError::MissingRecord(_) | TomographyError::DuplicateRecord(_) | TomographyError::InvalidState(_)
            ),
            Error::Study(e) => matches!(e, StudyError::InvalidConfig(_)),
            Error::Type(_) | Error::Format { .. } => true,
            Error::Io { .. } => false,
        }
    }
}

//! Crate-wide error wrapping each module's error, with a coarse class used
//! for process exit codes.

use thiserror::Error;

use crate::data::DataError;
use crate::detect::DetectError;
use crate::features::FeatureError;
use crate::gan::GanError;
use crate::tensor::checkpoint::CheckpointError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Gan(#[from] GanError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Failure classes that map to distinct exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad arguments, configuration or preconditions.
    Usage,
    Io,
    /// Malformed or corrupt files.
    Format,
    /// Non-finite values or failed numerical checks.
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use ErrorClass::*;
        match self {
            Error::Io(_) => Io,
            Error::Config(_) => Usage,
            Error::Tensor(e) => match e {
                TensorError::NonFinite { .. } | TensorError::NonFiniteGradient { .. } => Numerical,
                _ => Usage,
            },
            Error::Checkpoint(e) => match e {
                CheckpointError::Io(_) => Io,
                _ => Format,
            },
            Error::Data(e) => match e {
                DataError::Io(_) => Io,
                DataError::UnknownPatient(_) | DataError::Invalid(_) => Usage,
                _ => Format,
            },
            Error::Feature(e) => match e {
                FeatureError::Io(_) => Io,
                _ => Usage,
            },
            Error::Gan(e) => match e {
                GanError::Io(_) => Io,
                GanError::NonFinite { .. } => Numerical,
                GanError::Checkpoint(CheckpointError::Io(_)) => Io,
                GanError::Checkpoint(_) => Format,
                GanError::Tensor(TensorError::NonFinite { .. })
                | GanError::Tensor(TensorError::NonFiniteGradient { .. }) => Numerical,
                _ => Usage,
            },
            Error::Detect(e) => match e {
                DetectError::Io(_) | DetectError::Data(DataError::Io(_)) => Io,
                DetectError::Numerical(_) | DetectError::Inconsistent(_) => Numerical,
                DetectError::Format(_) => Format,
                DetectError::Data(DataError::UnknownPatient(_) | DataError::Invalid(_)) => Usage,
                DetectError::Data(_) => Format,
                _ => Usage,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classes() {
        let io = std::io::Error::other("x");
        assert_eq!(Error::from(io).class(), ErrorClass::Io);
        assert_eq!(
            Error::from(DataError::Truncated("dataset")).class(),
            ErrorClass::Format
        );
        let nf = GanError::NonFinite {
            what: "d_loss".into(),
            step: 3,
        };
        assert_eq!(Error::from(nf).class(), ErrorClass::Numerical);
        assert_eq!(Error::Config("k".into()).class(), ErrorClass::Usage);
    }
}

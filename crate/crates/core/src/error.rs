use thiserror::Error;

use crate::assignor::AssignorError;
use crate::attack::AttackError;
use crate::config::ConfigError;
use crate::corpus::DatasetError;
use crate::detector::DetectorError;
use crate::eval::EvalError;
use crate::matrix::MatrixError;
use crate::paraphrase::ParaphraseError;
use crate::prior::PriorError;
use crate::train::TrainError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Assignor(#[from] AssignorError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Paraphrase(#[from] ParaphraseError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { context: context.into(), source }
    }

    /// True for errors caused by bad user input rather than by a failure
    /// while running.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Dataset(_) | Error::Config(_) | Error::Prior(_) => true,
            Error::Attack(e) => e.is_validation(),
            Error::Eval(e) => e.is_validation(),
            Error::Train(TrainError::TooFewSamples { .. }) | Error::Train(TrainError::InvalidConfig(_)) => true,
            Error::Matrix(MatrixError::InvalidThreshold(_)) => true,
            Error::Detector(DetectorError::EmptyText) => true,
            Error::Paraphrase(ParaphraseError::EmptyText) => true,
            _ => false,
        }
    }

    /// Process exit code: 2 for validation errors, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.is_validation() {
            2
        } else {
            3
        }
    }
}

//! Variational weight assignor.
//!
//! Maps a prediction matrix to a log-normal posterior over the intermediate
//! weight of each cell and is trained by maximizing the evidence lower bound
//! against the variance-based prior from [`crate::prior`].

mod checkpoint;
mod network;
mod variational;

use thiserror::Error;

pub use checkpoint::{load_assignor, save_assignor, AssignorCheckpoint, ASSIGNOR_FORMAT, ASSIGNOR_FORMAT_VERSION};
pub use network::{AssignorConfig, AssignorParams, AttentionBlock, ForwardCache};
pub use variational::{
    assignor_gradients, draw_noise, elbo, elbo_for_posterior, infer_posterior, kl_lognormal, sample_weights,
    AssignorExample, PosteriorParams, LIKELIHOOD_CLAMP,
};


#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssignorError {
    #[error("non-finite activation at cell ({row}, {col}); training has diverged")]
    NonFiniteActivation { row: usize, col: usize },
    #[error("non-finite evidence lower bound")]
    NonFiniteElbo,
    #[error("assignor checkpoint: {0}")]
    Checkpoint(String),
}

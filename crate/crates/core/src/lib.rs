//! Adversarially robust text detection with a two-dimensional ensemble.
//!
//! An input text is paraphrased `N` times, every base detector scores the
//! input and each paraphrase, and the resulting `M x (N+1)` probability matrix
//! is aggregated with weights produced by a variational weight assignor. The
//! crate also contains the training loop that alternates adversarial updates
//! of the detectors and the assignor, desk-scale attack implementations used
//! both for training and for evaluation, and Monte-Carlo verifiers for the
//! Chebyshev-style lower bounds on correct detection.

pub mod assignor;
pub mod attack;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod detector;
pub mod error;
pub mod eval;
pub mod matrix;
pub mod model;
pub mod paraphrase;
pub mod prior;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
pub use matrix::{Label, PredictionMatrix, WeightMatrix};

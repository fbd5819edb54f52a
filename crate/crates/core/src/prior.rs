//! Variance-based log-normal prior over intermediate weights.
//!
//! A column with high variance across detectors marks a sample that is hard
//! to predict; a row with high variance across samples marks a detector that
//! is unreliable on this meaning set. Both lower the prior mean of the
//! corresponding cells:
//!
//! ```text
//! psi_n = exp(-alpha * var_n)      psi_m = exp(-beta * var_m)
//! w~_{m,n} ~ LogNormal(psi_m + psi_n, var_dt + var_sp)
//! ```
//!
//! The prior depends on the prediction matrix only, never on the label.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{moments, Moments, PredictionMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PriorError {
    #[error("prior hyperparameter `{name}` must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorConfig {
    pub alpha: f64,
    pub beta: f64,
    pub var_dt: f64,
    pub var_sp: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0, var_dt: 0.5, var_sp: 0.5 }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<(), PriorError> {
        for (name, value) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("var_dt", self.var_dt),
            ("var_sp", self.var_sp),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(PriorError::NonPositive { name, value });
            }
        }
        Ok(())
    }

    /// Shared variance of every cell, for prior and posterior alike.
    pub fn variance(&self) -> f64 {
        self.var_dt + self.var_sp
    }
}

/// Mean and variance of the Gaussian underlying a log-normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalParams {
    pub mean: f64,
    pub variance: f64,
}

impl LogNormalParams {
    pub fn new(mean: f64, variance: f64) -> Result<Self, PriorError> {
        if !(variance.is_finite() && variance > 0.0) {
            return Err(PriorError::NonPositive { name: "variance", value: variance });
        }
        Ok(Self { mean, variance })
    }

    /// `E[w] = exp(mean + variance / 2)`.
    pub fn expectation(&self) -> f64 {
        (self.mean + 0.5 * self.variance).exp()
    }
}

/// Prior parameters for every cell of one prediction matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorGrid {
    rows: usize,
    cols: usize,
    means: Vec<f64>,
    variance: f64,
}

impl PriorGrid {
    pub fn new(rows: usize, cols: usize, means: Vec<f64>, variance: f64) -> Self {
        assert_eq!(rows * cols, means.len());
        Self { rows, cols, means, variance }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn cell(&self, m: usize, n: usize) -> LogNormalParams {
        LogNormalParams { mean: self.means[m * self.cols + n], variance: self.variance }
    }
}

/// `(psi_n per column, psi_m per row)`.
pub fn prior_mean_components(stats: &Moments, cfg: &PriorConfig) -> (Vec<f64>, Vec<f64>) {
    let psi_n = stats.col_var.iter().map(|v| (-cfg.alpha * v).exp()).collect();
    let psi_m = stats.row_var.iter().map(|v| (-cfg.beta * v).exp()).collect();
    (psi_n, psi_m)
}

pub fn build_prior(p: &PredictionMatrix, cfg: &PriorConfig) -> PriorGrid {
    let (rows, cols) = p.shape();
    let (psi_n, psi_m) = prior_mean_components(&moments(p), cfg);
    let means = psi_m
        .iter()
        .flat_map(|pm| psi_n.iter().map(move |pn| pm + pn))
        .collect();
    PriorGrid::new(rows, cols, means, cfg.variance())
}

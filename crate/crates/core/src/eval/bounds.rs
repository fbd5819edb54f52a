//! Monte-Carlo checks of the Chebyshev lower bounds on correct detection.
//!
//! A scenario fixes, per detector `m`, the mean `mu[m]` and variance
//! `sigma_sq[m]` of its probability outputs. Each trial draws an
//! `M x (N+1)` matrix of independent probabilities, averages it uniformly and
//! classifies the average at threshold `epsilon`. With
//! `delta = |mean(mu) - epsilon|` the analytic bounds are
//!
//! * single detector: `1 - sigma0^2 / ((N+1) delta^2)`
//! * ensemble: `1 - sum(sigma_m^2) / ((N+1) M^2 delta^2)`

use rand::distr::Distribution;
use rand::Rng as _;
use rand_distr::Beta;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::matrix::{classify, DecisionConfig, Label};
use crate::rng::{derive_seed, rng_from_seed, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrawFamily {
    /// Beta distribution with matched mean and variance; a Bernoulli when the
    /// variance is maximal, a point mass when it is zero.
    #[default]
    Beta,
    /// `mu - sigma` or `mu + sigma` with probability 1/2 each.
    TwoPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundScenario {
    pub mu: Vec<f64>,
    pub sigma_sq: Vec<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Generated samples per input (`N`).
    pub generated: usize,
    pub label: Label,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub family: DrawFamily,
    #[serde(default)]
    pub seed: u64,
}

fn default_epsilon() -> f64 {
    0.5
}

fn default_trials() -> usize {
    10_000
}

impl BoundScenario {
    pub fn single(mu0: f64, sigma0_sq: f64, epsilon: f64, generated: usize, label: Label, trials: usize) -> Self {
        Self {
            mu: vec![mu0],
            sigma_sq: vec![sigma0_sq],
            epsilon,
            generated,
            label,
            trials,
            family: DrawFamily::Beta,
            seed: 0,
        }
    }

    pub fn detectors(&self) -> usize {
        self.mu.len()
    }

    pub fn delta(&self) -> f64 {
        (self.mu.iter().sum::<f64>() / self.mu.len() as f64 - self.epsilon).abs()
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |msg: String| Err(EvalError::InvalidScenario(msg));
        if self.mu.is_empty() || self.mu.len() != self.sigma_sq.len() {
            return bad(format!("need matching non-empty mu and sigma_sq, got {} and {}", self.mu.len(), self.sigma_sq.len()));
        }
        if self.trials == 0 {
            return bad("trials must be positive".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        for (m, (&mu, &var)) in self.mu.iter().zip(&self.sigma_sq).enumerate() {
            if !(0.0..=1.0).contains(&mu) || !(var >= 0.0) {
                return bad(format!("detector {m}: mean {mu} or variance {var} out of range"));
            }
            let feasible = match self.family {
                DrawFamily::Beta => var <= mu * (1.0 - mu) * (1.0 + 1e-12),
                DrawFamily::TwoPoint => mu - var.sqrt() >= -1e-12 && mu + var.sqrt() <= 1.0 + 1e-12,
            };
            if !feasible {
                return Err(EvalError::InfeasibleMoments { detector: m, mean: mu, variance: var });
            }
        }
        let delta = self.delta();
        if !(delta > 0.0) {
            return Err(EvalError::ZeroMargin);
        }
        let mean = self.mu.iter().sum::<f64>() / self.mu.len() as f64;
        if classify(mean, DecisionConfig { epsilon: self.epsilon }) != self.label {
            return Err(EvalError::WrongSide { mean, epsilon: self.epsilon });
        }
        Ok(())
    }
}

/// `1 - sigma0^2 / ((N+1) delta^2)`.
pub fn single_bound(sigma0_sq: f64, generated: usize, delta: f64) -> f64 {
    1.0 - sigma0_sq / ((generated + 1) as f64 * delta * delta)
}

/// `1 - sum(sigma_m^2) / ((N+1) M^2 delta^2)`.
pub fn ensemble_bound(sigma_sq: &[f64], generated: usize, delta: f64) -> f64 {
    let m = sigma_sq.len() as f64;
    1.0 - sigma_sq.iter().sum::<f64>() / ((generated + 1) as f64 * m * m * delta * delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub empirical: f64,
    pub bound: f64,
    pub std_error: f64,
}

impl BoundCheck {
    /// Empirical rate no more than `z` standard errors below the bound.
    pub fn holds(&self, z: f64) -> bool {
        self.empirical >= self.bound - z * self.std_error
    }
}

enum Sampler {
    Point(f64),
    Bernoulli(f64),
    Beta(Beta<f64>),
    TwoPoint(f64, f64),
}

impl Sampler {
    fn new(mu: f64, var: f64, family: DrawFamily) -> Self {
        if var <= 0.0 {
            return Sampler::Point(mu);
        }
        match family {
            DrawFamily::TwoPoint => {
                let s = var.sqrt();
                Sampler::TwoPoint((mu - s).max(0.0), (mu + s).min(1.0))
            }
            DrawFamily::Beta => {
                let common = mu * (1.0 - mu) / var - 1.0;
                if common <= 1e-12 {
                    Sampler::Bernoulli(mu)
                } else {
                    Sampler::Beta(Beta::new(mu * common, (1.0 - mu) * common).expect("positive shape parameters"))
                }
            }
        }
    }

    fn draw(&self, rng: &mut Rng) -> f64 {
        match self {
            Sampler::Point(p) => *p,
            Sampler::Bernoulli(p) => f64::from(u8::from(rng.random::<f64>() < *p)),
            Sampler::Beta(b) => b.sample(rng),
            Sampler::TwoPoint(lo, hi) => {
                if rng.random::<bool>() {
                    *hi
                } else {
                    *lo
                }
            }
        }
    }
}

/// Simulates the scenario and reports the empirical correct rate next to
/// the ensemble bound (which equals the single bound when `M = 1`).
pub fn verify_ensemble_bound(s: &BoundScenario) -> Result<BoundCheck, EvalError> {
    s.validate()?;
    let samplers: Vec<Sampler> = s.mu.iter().zip(&s.sigma_sq).map(|(&m, &v)| Sampler::new(m, v, s.family)).collect();
    let cells = (s.generated + 1) * samplers.len();
    let decision = DecisionConfig { epsilon: s.epsilon };
    let mut rng = rng_from_seed(derive_seed(s.seed, 0xb0));
    let mut correct = 0usize;
    for _ in 0..s.trials {
        let mut sum = 0.0;
        for sampler in &samplers {
            for _ in 0..=s.generated {
                sum += sampler.draw(&mut rng);
            }
        }
        if classify(sum / cells as f64, decision) == s.label {
            correct += 1;
        }
    }
    let rate = correct as f64 / s.trials as f64;
    Ok(BoundCheck {
        empirical: rate,
        bound: ensemble_bound(&s.sigma_sq, s.generated, s.delta()),
        std_error: (rate * (1.0 - rate) / s.trials as f64).sqrt(),
    })
}

/// Single-detector check; the scenario must have exactly one detector.
pub fn verify_single_bound(s: &BoundScenario) -> Result<BoundCheck, EvalError> {
    if s.detectors() != 1 {
        return Err(EvalError::InvalidScenario(format!("single-detector bound needs M = 1, got {}", s.detectors())));
    }
    let check = verify_ensemble_bound(s)?;
    Ok(BoundCheck { bound: single_bound(s.sigma_sq[0], s.generated, s.delta()), ..check })
}

/// Runs scenarios in parallel, preserving order.
pub fn verify_all(scenarios: &[BoundScenario]) -> Vec<Result<BoundCheck, EvalError>> {
    scenarios
        .par_iter()
        .map(|s| if s.detectors() == 1 { verify_single_bound(s) } else { verify_ensemble_bound(s) })
        .collect()
}

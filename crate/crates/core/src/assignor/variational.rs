//! Variational posterior, reparameterized sampling, closed-form KL, ELBO and
//! its gradient with respect to the assignor parameters.

use rand_distr::{Distribution, StandardNormal};

use super::network::AssignorParams;
use super::AssignorError;
use crate::matrix::{Label, PredictionMatrix, WeightMatrix};
use crate::prior::{build_prior, LogNormalParams, PriorConfig, PriorGrid};
use crate::rng::rng_from_seed;

/// Lower/upper clamp applied to the Bernoulli likelihood before the log.
pub const LIKELIHOOD_CLAMP: f64 = 1e-7;

/// Per-cell posterior means with the shared (prior) variance.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorParams {
    rows: usize,
    cols: usize,
    phi: Vec<f64>,
    variance: f64,
}

impl PosteriorParams {
    pub fn new(rows: usize, cols: usize, phi: Vec<f64>, variance: f64) -> Self {
        assert_eq!(rows * cols, phi.len());
        assert!(variance > 0.0);
        Self { rows, cols, phi, variance }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn cell(&self, m: usize, n: usize) -> LogNormalParams {
        LogNormalParams { mean: self.phi[m * self.cols + n], variance: self.variance }
    }

    /// Normalized cell-wise log-normal means, `exp(phi + var/2) / sum`.
    pub fn expected_weights(&self) -> WeightMatrix {
        let max = self.phi.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let raw: Vec<f64> = self.phi.iter().map(|&p| (p - max).exp()).collect();
        WeightMatrix::new(self.rows, self.cols, raw)
            .and_then(|w| w.normalize())
            .expect("exponentials are positive")
    }
}

/// Runs the inference network. The posterior variance is pinned to the prior
/// variance `var_dt + var_sp`.
pub fn infer_posterior(
    p: &PredictionMatrix,
    params: &AssignorParams,
    variance: f64,
) -> Result<PosteriorParams, AssignorError> {
    let (phi, _) = params.forward(p)?;
    let (rows, cols) = p.shape();
    Ok(PosteriorParams::new(rows, cols, phi, variance))
}

/// `count` i.i.d. standard-normal draws.
pub fn draw_noise(seed: u64, count: usize) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    (0..count).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Reparameterized draw of intermediate weights,
/// `w~ = exp(phi + sigma * noise)`.
pub fn sample_weights(post: &PosteriorParams, noise: &[f64]) -> WeightMatrix {
    assert_eq!(noise.len(), post.phi.len(), "one noise value per cell");
    let sigma = post.variance.sqrt();
    let values = post.phi.iter().zip(noise).map(|(p, e)| (p + sigma * e).exp()).collect();
    WeightMatrix::new(post.rows, post.cols, values).expect("exponentials are non-negative")
}

/// KL divergence between two log-normals (equal to the KL between their
/// underlying Gaussians).
pub fn kl_lognormal(q: &LogNormalParams, p: &LogNormalParams) -> f64 {
    let diff = q.mean - p.mean;
    if q.variance == p.variance {
        return diff * diff / (2.0 * p.variance);
    }
    0.5 * (p.variance / q.variance).ln() + (q.variance + diff * diff) / (2.0 * p.variance) - 0.5
}

/// Value of the K-sample ELBO and its gradient with respect to every
/// posterior mean. `noise` holds `k * cells` draws, draw-major.
pub(crate) fn elbo_and_grad(
    p: &PredictionMatrix,
    y: Label,
    phi: &[f64],
    prior: &PriorGrid,
    noise: &[f64],
    k: usize,
) -> (f64, Vec<f64>) {
    let cells = phi.len();
    assert_eq!(prior.means().len(), cells);
    assert_eq!(noise.len(), k * cells);
    let sigma = prior.variance().sqrt();
    let probs = p.as_slice();
    let mut grad = vec![0.0; cells];
    let mut loglik = 0.0;
    let mut log_w = vec![0.0; cells];
    let mut w = vec![0.0; cells];
    for draw in noise.chunks(cells) {
        for ((lw, ph), e) in log_w.iter_mut().zip(phi).zip(draw) {
            *lw = ph + sigma * e;
        }
        // normalization cancels any common factor, so shift by the max
        let max = log_w.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut total = 0.0;
        for (wi, lw) in w.iter_mut().zip(&log_w) {
            *wi = (lw - max).exp();
            total += *wi;
        }
        let mut p_bar = 0.0;
        for (wi, pv) in w.iter_mut().zip(probs) {
            *wi /= total;
            p_bar += *wi * pv;
        }
        let lik = y.likelihood(p_bar);
        let clamped = lik.clamp(LIKELIHOOD_CLAMP, 1.0 - LIKELIHOOD_CLAMP);
        loglik += clamped.ln();
        if clamped == lik {
            let dlog_dpbar = match y {
                Label::Harmful => 1.0 / lik,
                Label::Benign => -1.0 / lik,
            };
            for ((g, wi), pv) in grad.iter_mut().zip(&w).zip(probs) {
                *g += dlog_dpbar * wi * (pv - p_bar);
            }
        }
    }
    let kf = k as f64;
    for g in grad.iter_mut() {
        *g /= kf;
    }
    let mut kl = 0.0;
    let (_, cols) = prior.shape();
    for (c, g) in grad.iter_mut().enumerate() {
        let q = LogNormalParams { mean: phi[c], variance: prior.variance() };
        kl += kl_lognormal(&q, &prior.cell(c / cols, c % cols));
        *g -= (phi[c] - prior.means()[c]) / prior.variance();
    }
    (loglik / kf - kl, grad)
}

/// ELBO for an explicit posterior (bypassing the network).
pub fn elbo_for_posterior(
    p: &PredictionMatrix,
    y: Label,
    post: &PosteriorParams,
    prior: &PriorGrid,
    k: usize,
    seed: u64,
) -> f64 {
    assert!(k >= 1);
    assert_eq!(post.variance, prior.variance(), "posterior variance is tied to the prior");
    let noise = draw_noise(seed, k * post.phi.len());
    elbo_and_grad(p, y, &post.phi, prior, &noise, k).0
}

/// Monte-Carlo ELBO with `k` reparameterized weight draws.
pub fn elbo(
    p: &PredictionMatrix,
    y: Label,
    params: &AssignorParams,
    prior: &PriorGrid,
    k: usize,
    seed: u64,
) -> Result<f64, AssignorError> {
    let post = infer_posterior(p, params, prior.variance())?;
    Ok(elbo_for_posterior(p, y, &post, prior, k, seed))
}

/// One training example for the assignor; the noise seed fixes the
/// reparameterization draws.
#[derive(Debug, Clone)]
pub struct AssignorExample {
    pub matrix: PredictionMatrix,
    pub label: Label,
    pub noise_seed: u64,
}

/// `(-sum ELBO, d(-sum ELBO)/d params)` over a batch, with the prior rebuilt
/// from each matrix.
pub fn assignor_gradients(
    batch: &[AssignorExample],
    params: &AssignorParams,
    prior_cfg: &PriorConfig,
    k: usize,
) -> Result<(f64, AssignorParams), AssignorError> {
    assert!(k >= 1);
    let mut total = AssignorParams::zeros(params.config);
    let mut loss = 0.0;
    for ex in batch {
        let (value, grad) = example_gradient(ex, params, prior_cfg, k)?;
        loss -= value;
        total.add_scaled(&grad, -1.0);
    }
    Ok((loss, total))
}

/// ELBO and its gradient (not negated) for one example.
fn example_gradient(
    ex: &AssignorExample,
    params: &AssignorParams,
    prior_cfg: &PriorConfig,
    k: usize,
) -> Result<(f64, AssignorParams), AssignorError> {
    let prior = build_prior(&ex.matrix, prior_cfg);
    let (phi, cache) = params.forward(&ex.matrix)?;
    let noise = draw_noise(ex.noise_seed, k * phi.len());
    let (value, dphi) = elbo_and_grad(&ex.matrix, ex.label, &phi, &prior, &noise, k);
    if !value.is_finite() {
        return Err(AssignorError::NonFiniteElbo);
    }
    Ok((value, params.backward(&ex.matrix, &cache, &dphi)))
}

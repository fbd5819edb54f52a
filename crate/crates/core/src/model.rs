//! Trained ensemble and the end-to-end prediction pipeline.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::assignor::{draw_noise, infer_posterior, load_assignor, save_assignor, AssignorConfig, AssignorParams};
use crate::attack::Predictor;
use crate::config::ConfigError;
use crate::detector::{
    default_spaces, load_detectors, predict_features_matrix, save_detectors, Detector, TextFeatures,
};
use crate::error::Error;
use crate::matrix::{aggregate_weighted, classify, DecisionConfig, Label, PredictionMatrix, WeightMatrix};
use crate::paraphrase::{Paraphraser, Provenance};
use crate::prior::PriorConfig;
use crate::rng::{derive_seed, derive_seed_str};
use crate::Result;

pub const DETECTORS_FILE: &str = "detectors.json";
pub const ASSIGNOR_FILE: &str = "assignor.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceMode {
    /// Average of `K` posterior weight draws.
    Mc,
    /// Normalized posterior means.
    #[default]
    Plugin,
}

impl fmt::Display for InferenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InferenceMode::Mc => "mc",
            InferenceMode::Plugin => "plugin",
        })
    }
}

impl FromStr for InferenceMode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mc" => Ok(InferenceMode::Mc),
            "plugin" => Ok(InferenceMode::Plugin),
            _ => Err(ConfigError::Invalid(format!("unknown mode `{s}`; expected mc or plugin"))),
        }
    }
}

/// Detectors plus weight assignor.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    pub detectors: Vec<Detector>,
    pub assignor: AssignorParams,
}

impl EnsembleModel {
    /// Zero-weight detectors over the default feature spaces and a freshly
    /// initialized assignor.
    pub fn init(detectors: usize, feature_dim: usize, assignor: AssignorConfig, seed: u64) -> Self {
        Self {
            detectors: default_spaces(detectors, feature_dim).into_iter().map(Detector::new).collect(),
            assignor: AssignorParams::init(assignor, derive_seed_str(seed, "assignor")),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        let det = dir.join(DETECTORS_FILE);
        save_detectors(&self.detectors, &det).map_err(|e| Error::io(det.display().to_string(), e))?;
        let ag = dir.join(ASSIGNOR_FILE);
        save_assignor(&self.assignor, &ag).map_err(|e| Error::io(ag.display().to_string(), e))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Ok(Self { detectors: load_detectors(&dir.join(DETECTORS_FILE))?, assignor: load_assignor(&dir.join(ASSIGNOR_FILE))? })
    }

    pub fn detector_matrix(&self, samples: &[TextFeatures]) -> Result<PredictionMatrix> {
        Ok(predict_features_matrix(&self.detectors, samples)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceConfig {
    /// Paraphrases per input (`N`).
    pub paraphrases: usize,
    /// Posterior draws in MC mode (`K`).
    pub samples: usize,
    pub mode: InferenceMode,
    pub decision: DecisionConfig,
    pub prior: PriorConfig,
    pub seed: u64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            paraphrases: 4,
            samples: 64,
            mode: InferenceMode::Plugin,
            decision: DecisionConfig::default(),
            prior: PriorConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub probability: f64,
    pub label: Label,
    pub mode: InferenceMode,
    pub paraphrases: usize,
    pub provenance: Provenance,
    /// Expected normalized weight of every cell, detector-major.
    pub weights: Vec<Vec<f64>>,
}

/// Paraphrase, score with every detector, weight and aggregate.
pub struct Pipeline<'a> {
    pub model: &'a EnsembleModel,
    pub generator: &'a dyn Paraphraser,
    pub config: InferenceConfig,
}

impl<'a> Pipeline<'a> {
    pub fn new(model: &'a EnsembleModel, generator: &'a dyn Paraphraser, config: InferenceConfig) -> Self {
        Self { model, generator, config }
    }

    /// Builds the prediction matrix for `text`. Paraphrase seeds depend only
    /// on the configured seed and the text.
    pub fn matrix(&self, text: &str) -> Result<(PredictionMatrix, Provenance)> {
        let set = self.generator.paraphrase(text, self.config.paraphrases, derive_seed_str(self.config.seed, text))?;
        let features = set
            .samples()
            .iter()
            .map(|s| TextFeatures::extract(s))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((self.model.detector_matrix(&features)?, set.provenance))
    }

    pub fn verdict(&self, text: &str) -> Result<Verdict> {
        let (p, provenance) = self.matrix(text)?;
        let post = infer_posterior(&p, &self.model.assignor, self.config.prior.variance())?;
        let expected = post.expected_weights();
        let probability = match self.config.mode {
            InferenceMode::Plugin => aggregate_weighted(&p, &expected)?,
            InferenceMode::Mc => {
                let noise_seed = derive_seed(derive_seed_str(self.config.seed, text), 1);
                mc_aggregate(&p, post.phi(), post.variance(), self.config.samples, noise_seed)
            }
        };
        Ok(Verdict {
            probability,
            label: classify(probability, self.config.decision),
            mode: self.config.mode,
            paraphrases: self.config.paraphrases,
            provenance,
            weights: expected.to_rows(),
        })
    }
}

/// Mean of `k` weighted aggregates under reparameterized log-normal draws.
pub fn mc_aggregate(p: &PredictionMatrix, phi: &[f64], variance: f64, k: usize, seed: u64) -> f64 {
    let cells = phi.len();
    let noise = draw_noise(seed, k.max(1) * cells);
    let sigma = variance.sqrt();
    let probs = p.as_slice();
    let mut total = 0.0;
    let mut log_w = vec![0.0; cells];
    for draw in noise.chunks(cells) {
        for ((lw, ph), e) in log_w.iter_mut().zip(phi).zip(draw) {
            *lw = ph + sigma * e;
        }
        let max = log_w.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let (mut num, mut den) = (0.0, 0.0);
        for (lw, pv) in log_w.iter().zip(probs) {
            let w = (lw - max).exp();
            num += w * pv;
            den += w;
        }
        total += (num / den).clamp(0.0, 1.0);
    }
    total / k.max(1) as f64
}

impl Predictor for Pipeline<'_> {
    fn predict(&self, text: &str) -> Result<f64> {
        Ok(self.verdict(text)?.probability)
    }

    fn decision(&self) -> DecisionConfig {
        self.config.decision
    }
}

/// Uniform weights over the whole grid (no assignor).
pub fn uniform_weights(p: &PredictionMatrix) -> WeightMatrix {
    let (r, c) = p.shape();
    WeightMatrix::uniform(r, c).expect("non-empty shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paraphrase::RuleBasedGenerator;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_cell_modes_reproduce_the_detector() {
        let mut model = EnsembleModel::init(1, 1024, AssignorConfig::default(), 3);
        model.detectors[0].params.bias = 0.4;
        model.detectors[0].params.weights[17] = -2.0;
        let gen = RuleBasedGenerator::bundled();
        let text = "the farmer sold the old boat";
        let direct = model.detectors[0].predict(text).unwrap();
        for mode in [InferenceMode::Mc, InferenceMode::Plugin] {
            let cfg = InferenceConfig { paraphrases: 0, mode, ..Default::default() };
            let v = Pipeline::new(&model, &gen, cfg).verdict(text).unwrap();
            assert_abs_diff_eq!(v.probability, direct, epsilon = 1e-14);
            assert_eq!(v.weights, vec![vec![1.0]]);
        }
    }

    #[test]
    fn zero_model_is_undecided() {
        let model = EnsembleModel::init(5, 1024, AssignorConfig::default(), 0);
        let gen = RuleBasedGenerator::bundled();
        let v = Pipeline::new(&model, &gen, InferenceConfig::default()).verdict("hello").unwrap();
        assert_eq!(v.probability, 0.5);
        assert_eq!(v.label, Label::Benign);
        let total: f64 = v.weights.iter().flatten().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn plugin_is_deterministic() {
        let mut model = EnsembleModel::init(3, 1024, AssignorConfig::default(), 1);
        for (m, d) in model.detectors.iter_mut().enumerate() {
            d.params.weights.iter_mut().enumerate().for_each(|(i, w)| *w = ((i * 7 + m) % 13) as f64 / 13.0 - 0.5);
        }
        let gen = RuleBasedGenerator::bundled();
        let pipe = Pipeline::new(&model, &gen, InferenceConfig::default());
        let a = pipe.verdict("my friend painted the red fence today").unwrap();
        let b = pipe.verdict("my friend painted the red fence today").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut model = EnsembleModel::init(2, 256, AssignorConfig { embed_dim: 4, hidden_dim: 8 }, 5);
        model.detectors[1].params.weights[3] = 0.125;
        model.save(dir.path()).unwrap();
        assert_eq!(EnsembleModel::load(dir.path()).unwrap(), model);
    }
}

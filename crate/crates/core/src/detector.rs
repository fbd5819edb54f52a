//! Hashed n-gram logistic detectors.
//!
//! Each detector sees lowercase word unigrams and/or character trigrams
//! (taken per word, with `<` and `>` boundary markers), hashed into a space
//! of `dim` buckets with a detector-specific seed. Detectors differ in their
//! feature mix, hash seed and the fraction of features they keep, which makes
//! their errors less correlated.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{Label, PredictionMatrix};
use crate::rng::{fnv1a, mix64};

pub const DEFAULT_FEATURE_DIM: usize = 1 << 16;

/// Clamp applied to probabilities before taking logs in the cross-entropy.
pub const CE_CLAMP: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectorError {
    #[error("text is empty after trimming")]
    EmptyText,
    #[error("text for detector {detector}, sample {sample} is empty after trimming")]
    EmptyTextAt { detector: usize, sample: usize },
    #[error("no detectors given")]
    NoDetectors,
    #[error("no samples given")]
    NoSamples,
    #[error("detector checkpoint: {0}")]
    Checkpoint(String),
}

/// Lowercased whitespace tokens with surrounding sentence punctuation removed.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| ".,;:?!\"'()".contains(c)).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMix {
    Words,
    Chars,
    Both,
}

/// Seed-independent hashes of the word and trigram features of a text,
/// computed once and projected into each detector's space.
#[derive(Debug, Clone, PartialEq)]
pub struct TextFeatures {
    words: Vec<u64>,
    trigrams: Vec<u64>,
}

impl TextFeatures {
    pub fn extract(text: &str) -> Result<Self, DetectorError> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(DetectorError::EmptyText);
        }
        let mut words = Vec::with_capacity(tokens.len());
        let mut trigrams = Vec::new();
        let mut buf = String::new();
        for tok in &tokens {
            buf.clear();
            buf.push_str("w\u{1f}");
            buf.push_str(tok);
            words.push(fnv1a(buf.as_bytes()));
            let chars: Vec<char> = std::iter::once('<').chain(tok.chars()).chain(std::iter::once('>')).collect();
            for win in chars.windows(3) {
                buf.clear();
                buf.push_str("c\u{1f}");
                buf.extend(win);
                trigrams.push(fnv1a(buf.as_bytes()));
            }
        }
        Ok(Self { words, trigrams })
    }
}

/// Sparse feature counts, sorted by index with no duplicates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureVector {
    entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn get(&self, index: u32) -> f64 {
        self.entries
            .binary_search_by_key(&index, |e| e.0)
            .map_or(0.0, |i| self.entries[i].1)
    }

    pub fn dot(&self, weights: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, c)| weights[i as usize] * c).sum()
    }
}

/// How a detector maps text features into its weight vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpace {
    pub dim: usize,
    pub mix: FeatureMix,
    pub hash_seed: u64,
    /// Fraction of hashed features this detector keeps.
    pub keep_rate: f64,
}

impl Default for FeatureSpace {
    fn default() -> Self {
        Self { dim: DEFAULT_FEATURE_DIM, mix: FeatureMix::Both, hash_seed: 0, keep_rate: 1.0 }
    }
}

impl FeatureSpace {
    pub fn project(&self, features: &TextFeatures) -> FeatureVector {
        let mut idx: Vec<u32> = Vec::with_capacity(features.words.len() + features.trigrams.len());
        let threshold = (self.keep_rate.clamp(0.0, 1.0) * u32::MAX as f64) as u64;
        let mut push = |h: u64| {
            let mixed = mix64(h ^ self.hash_seed);
            if self.keep_rate >= 1.0 || (mixed >> 32) <= threshold {
                idx.push((mixed % self.dim as u64) as u32);
            }
        };
        if matches!(self.mix, FeatureMix::Words | FeatureMix::Both) {
            features.words.iter().copied().for_each(&mut push);
        }
        if matches!(self.mix, FeatureMix::Chars | FeatureMix::Both) {
            features.trigrams.iter().copied().for_each(&mut push);
        }
        idx.sort_unstable();
        let mut entries: Vec<(u32, f64)> = Vec::with_capacity(idx.len());
        for i in idx {
            match entries.last_mut() {
                Some(last) if last.0 == i => last.1 += 1.0,
                _ => entries.push((i, 1.0)),
            }
        }
        FeatureVector { entries }
    }

    pub fn featurize(&self, text: &str) -> Result<FeatureVector, DetectorError> {
        Ok(self.project(&TextFeatures::extract(text)?))
    }
}

/// Featurizes with the default space: words and trigrams, seed 0, 2^16 buckets.
pub fn featurize(text: &str) -> Result<FeatureVector, DetectorError> {
    FeatureSpace::default().featurize(text)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorParams {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl DetectorParams {
    pub fn zeros(dim: usize) -> Self {
        Self { weights: vec![0.0; dim], bias: 0.0 }
    }

    pub fn logit(&self, x: &FeatureVector) -> f64 {
        x.dot(&self.weights) + self.bias
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn predict_proba(params: &DetectorParams, x: &FeatureVector) -> f64 {
    sigmoid(params.logit(x))
}

/// One base detector: its feature space and its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Detector {
    pub space: FeatureSpace,
    pub params: DetectorParams,
}

impl Detector {
    pub fn new(space: FeatureSpace) -> Self {
        Self { params: DetectorParams::zeros(space.dim), space }
    }

    pub fn predict_features(&self, features: &TextFeatures) -> f64 {
        predict_proba(&self.params, &self.space.project(features))
    }

    pub fn predict(&self, text: &str) -> Result<f64, DetectorError> {
        Ok(predict_proba(&self.params, &self.space.featurize(text)?))
    }
}

pub const DEFAULT_KEEP_RATE: f64 = 0.4;

/// Random-subspace default ensemble: every detector sees word and character
/// n-grams under its own hash seed and keeps a random 40% of the features.
pub fn default_spaces(count: usize, dim: usize) -> Vec<FeatureSpace> {
    (0..count)
        .map(|m| FeatureSpace {
            dim,
            mix: FeatureMix::Both,
            hash_seed: mix64(0x5eed_0000 + m as u64),
            keep_rate: DEFAULT_KEEP_RATE,
        })
        .collect()
}

pub fn predict_features_matrix(detectors: &[Detector], samples: &[TextFeatures]) -> Result<PredictionMatrix, DetectorError> {
    if detectors.is_empty() {
        return Err(DetectorError::NoDetectors);
    }
    if samples.is_empty() {
        return Err(DetectorError::NoSamples);
    }
    let mut values = Vec::with_capacity(detectors.len() * samples.len());
    for det in detectors {
        values.extend(samples.iter().map(|f| det.predict_features(f)));
    }
    Ok(PredictionMatrix::new(detectors.len(), samples.len(), values).expect("sigmoid outputs are probabilities"))
}

/// Entry `(m, n)` is detector `m` on sample `n`; sample 0 is the input text.
pub fn predict_matrix<S: AsRef<str>>(detectors: &[Detector], samples: &[S]) -> Result<PredictionMatrix, DetectorError> {
    if detectors.is_empty() {
        return Err(DetectorError::NoDetectors);
    }
    let features = samples
        .iter()
        .enumerate()
        .map(|(n, s)| {
            TextFeatures::extract(s.as_ref()).map_err(|_| DetectorError::EmptyTextAt { detector: 0, sample: n })
        })
        .collect::<Result<Vec<_>, _>>()?;
    predict_features_matrix(detectors, &features)
}

/// Per-class loss weights; the minority class gets the larger weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub benign: f64,
    pub harmful: f64,
}

impl Default for ClassWeights {
    fn default() -> Self {
        Self { benign: 1.0, harmful: 1.0 }
    }
}

impl ClassWeights {
    pub fn get(&self, y: Label) -> f64 {
        match y {
            Label::Benign => self.benign,
            Label::Harmful => self.harmful,
        }
    }

    /// Inverse class frequency, rescaled so the weights average to one over
    /// the given labels. Falls back to unit weights if a class is absent.
    pub fn inverse_frequency(labels: impl IntoIterator<Item = Label>) -> Self {
        let (mut neg, mut pos) = (0usize, 0usize);
        for y in labels {
            match y {
                Label::Benign => neg += 1,
                Label::Harmful => pos += 1,
            }
        }
        if neg == 0 || pos == 0 {
            return Self::default();
        }
        let total = (neg + pos) as f64;
        let (wn, wp) = (total / neg as f64, total / pos as f64);
        // mean over samples: (neg*wn + pos*wp)/total = 2, so halve
        let scale = total / (neg as f64 * wn + pos as f64 * wp);
        Self { benign: wn * scale, harmful: wp * scale }
    }
}

/// `-cw[y] * [y ln p + (1-y) ln(1-p)]` with `p` clamped to `[1e-7, 1-1e-7]`.
pub fn cost_sensitive_ce(p: f64, y: Label, cw: &ClassWeights) -> f64 {
    let p = p.clamp(CE_CLAMP, 1.0 - CE_CLAMP);
    -cw.get(y) * y.likelihood(p).ln()
}

/// Derivative of [`cost_sensitive_ce`] with respect to `p` (zero where the
/// clamp is active).
pub fn cost_sensitive_ce_grad(p: f64, y: Label, cw: &ClassWeights) -> f64 {
    if !(CE_CLAMP..=1.0 - CE_CLAMP).contains(&p) {
        return 0.0;
    }
    match y {
        Label::Harmful => -cw.harmful / p,
        Label::Benign => cw.benign / (1.0 - p),
    }
}

// --- checkpoint ------------------------------------------------------------

pub const DETECTOR_FORMAT: &str = "robust-ensemble.detectors";
pub const DETECTOR_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectorRecord {
    space: FeatureSpace,
    bias: f64,
    /// Non-zero weights as `[index, value]` pairs in increasing index order.
    weights: Vec<(u32, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectorFile {
    format: String,
    version: u32,
    detectors: Vec<DetectorRecord>,
}

pub fn detectors_to_json(detectors: &[Detector]) -> String {
    let file = DetectorFile {
        format: DETECTOR_FORMAT.to_string(),
        version: DETECTOR_FORMAT_VERSION,
        detectors: detectors
            .iter()
            .map(|d| DetectorRecord {
                space: d.space,
                bias: d.params.bias,
                weights: d
                    .params
                    .weights
                    .iter()
                    .enumerate()
                    .filter(|(_, w)| w.to_bits() != 0)
                    .map(|(i, &w)| (i as u32, w))
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string(&file).expect("serializable")
}

pub fn detectors_from_json(text: &str) -> Result<Vec<Detector>, DetectorError> {
    let bad = DetectorError::Checkpoint;
    let file: DetectorFile = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    if file.format != DETECTOR_FORMAT {
        return Err(bad(format!("unexpected format tag `{}`", file.format)));
    }
    if file.version != DETECTOR_FORMAT_VERSION {
        return Err(bad(format!("unsupported version {}", file.version)));
    }
    file.detectors
        .into_iter()
        .enumerate()
        .map(|(m, rec)| {
            if rec.space.dim == 0 {
                return Err(bad(format!("detector {m}: zero-dimensional feature space")));
            }
            let mut det = Detector::new(rec.space);
            det.params.bias = rec.bias;
            for (i, w) in rec.weights {
                let slot = det
                    .params
                    .weights
                    .get_mut(i as usize)
                    .ok_or_else(|| bad(format!("detector {m}: index {i} out of range")))?;
                *slot = w;
            }
            Ok(det)
        })
        .collect()
}

pub fn save_detectors(detectors: &[Detector], path: &Path) -> std::io::Result<()> {
    std::fs::write(path, detectors_to_json(detectors))
}

pub fn load_detectors(path: &Path) -> Result<Vec<Detector>, DetectorError> {
    let text = std::fs::read_to_string(path).map_err(|e| DetectorError::Checkpoint(format!("{}: {e}", path.display())))?;
    detectors_from_json(&text)
}

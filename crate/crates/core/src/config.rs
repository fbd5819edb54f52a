//! Run configuration shared by every CLI command.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignor::AssignorConfig;
use crate::attack::{AttackBudget, AttackKind};
use crate::detector::DEFAULT_FEATURE_DIM;
use crate::matrix::DecisionConfig;
use crate::model::{InferenceConfig, InferenceMode};
use crate::paraphrase::{LlmClient, LlmConfig, Paraphraser, RuleBasedGenerator, RuleConfig, SynonymLexicon};
use crate::prior::PriorConfig;
use crate::train::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    #[default]
    Rule,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub kind: GeneratorKind,
    /// Lexicon file for the rule-based generator and the attacks; the
    /// bundled lexicon when absent.
    pub lexicon: Option<PathBuf>,
    pub synonym_rate: f64,
    pub dropout_rate: f64,
    pub normalize_prob: f64,
    pub llm: LlmConfig,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        let r = RuleConfig::default();
        Self {
            kind: GeneratorKind::Rule,
            lexicon: None,
            synonym_rate: r.synonym_rate,
            dropout_rate: r.dropout_rate,
            normalize_prob: r.normalize_prob,
            llm: LlmConfig::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn load_lexicon(&self) -> crate::Result<Arc<SynonymLexicon>> {
        Ok(Arc::new(match &self.lexicon {
            Some(p) => SynonymLexicon::from_path(p)?,
            None => SynonymLexicon::bundled(),
        }))
    }

    pub fn build(&self, lexicon: Arc<SynonymLexicon>) -> Box<dyn Paraphraser> {
        match self.kind {
            GeneratorKind::Rule => Box::new(RuleBasedGenerator::new(
                lexicon,
                RuleConfig {
                    synonym_rate: self.synonym_rate,
                    dropout_rate: self.dropout_rate,
                    normalize_prob: self.normalize_prob,
                },
            )),
            GeneratorKind::Llm => Box::new(LlmClient::new(self.llm.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Base detectors (`M`).
    pub detectors: usize,
    /// Paraphrases per input at inference (`N`).
    pub paraphrases: usize,
    /// Posterior draws at inference in MC mode (`K`).
    pub samples: usize,
    /// Hashed feature dimension (`F`).
    pub feature_dim: usize,
    pub mode: InferenceMode,
    /// Worker threads; 0 uses all cores.
    pub threads: usize,
    pub prior: PriorConfig,
    pub decision: DecisionConfig,
    pub assignor: AssignorConfig,
    pub train: TrainConfig,
    pub budget: AttackBudget,
    /// Attacks used for training augmentation.
    pub attacks: Vec<AttackKind>,
    pub generator: GeneratorConfig,
    pub paths: Paths,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            detectors: 5,
            paraphrases: 4,
            samples: 64,
            feature_dim: DEFAULT_FEATURE_DIM,
            mode: InferenceMode::Plugin,
            threads: 0,
            prior: PriorConfig::default(),
            decision: DecisionConfig::default(),
            assignor: AssignorConfig::default(),
            train: TrainConfig::default(),
            budget: AttackBudget::default(),
            attacks: AttackKind::ALL.to_vec(),
            generator: GeneratorConfig::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| ConfigError::Parse { path: origin.to_string(), message: e.to_string() })?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> crate::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path.display().to_string(), e))?;
        Ok(Self::from_json(&text, &path.display().to_string())?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable") + "\n"
    }

    pub fn validate(&self) -> crate::Result<()> {
        let bad = |m: String| -> crate::Result<()> { Err(ConfigError::Invalid(m).into()) };
        if self.detectors == 0 {
            return bad("detectors must be at least 1".into());
        }
        if self.samples == 0 {
            return bad("samples must be at least 1".into());
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be positive".into());
        }
        if self.assignor.embed_dim == 0 || self.assignor.hidden_dim == 0 {
            return bad("assignor dimensions must be positive".into());
        }
        let g = &self.generator;
        for (name, v) in [("synonym_rate", g.synonym_rate), ("dropout_rate", g.dropout_rate), ("normalize_prob", g.normalize_prob)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("generator.{name} must lie in [0, 1], got {v}"));
            }
        }
        if g.kind == GeneratorKind::Llm && g.llm.url.is_empty() {
            return bad("generator.llm.url is required for the llm generator".into());
        }
        self.prior.validate()?;
        self.decision.validate()?;
        self.train.validate()?;
        self.budget.validate()?;
        Ok(())
    }

    /// Inference settings; training reuses `train.paraphrases` instead.
    pub fn inference(&self) -> InferenceConfig {
        InferenceConfig {
            paraphrases: self.paraphrases,
            samples: self.samples,
            mode: self.mode,
            decision: self.decision,
            prior: self.prior,
            seed: self.seed,
        }
    }
}

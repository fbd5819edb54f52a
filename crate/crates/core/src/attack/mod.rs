//! Black-box, score-based text attacks.
//!
//! All attacks only query a [`Predictor`] for the harmful-class probability.
//! Identical texts are answered from a per-attack cache, so `queries_used`
//! counts distinct target calls.

mod edits;
mod search;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::LabeledText;
use crate::matrix::{classify, DecisionConfig, Label};
use crate::paraphrase::{Paraphraser, SynonymLexicon};
use crate::rng::derive_seed_str;
use crate::Result;

pub use edits::{char_distance, token_distance};
pub use search::{char_attack, greedy_attack, multilevel_attack, sentence_attack, word_attack, word_importance, ActionSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttackError {
    #[error("unknown attack `{name}`; valid names are char, word, sentence, multilevel")]
    UnknownAttack { name: String },
    #[error("invalid attack budget: {0}")]
    InvalidBudget(String),
    #[error("sample is misclassified by the target (p = {probability}, label {label})")]
    Misclassified { probability: f64, label: u8 },
    #[error("attack set is empty")]
    NoAttacks,
}

impl AttackError {
    pub fn is_validation(&self) -> bool {
        !matches!(self, AttackError::Misclassified { .. })
    }
}

/// Anything that scores a text with a harmful-class probability.
pub trait Predictor: Sync {
    fn predict(&self, text: &str) -> Result<f64>;

    fn decision(&self) -> DecisionConfig {
        DecisionConfig::default()
    }
}

/// Adapts a closure into a [`Predictor`] with the default threshold.
pub struct FnPredictor<F>(pub F);

impl<F: Fn(&str) -> Result<f64> + Sync> Predictor for FnPredictor<F> {
    fn predict(&self, text: &str) -> Result<f64> {
        (self.0)(text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackBudget {
    /// Fraction of words that may differ from the clean text.
    pub max_edit_fraction: f64,
    /// Cap on distinct target calls per sample.
    pub max_queries: usize,
    /// Hypotheses kept alive by the sentence attack.
    pub beam_width: usize,
    /// Paraphrases requested per expanded hypothesis.
    pub expansions: usize,
    /// Rounds of the sentence attack.
    pub max_depth: usize,
}

impl Default for AttackBudget {
    fn default() -> Self {
        Self { max_edit_fraction: 0.3, max_queries: 500, beam_width: 4, expansions: 8, max_depth: 3 }
    }
}

impl AttackBudget {
    pub fn validate(&self) -> Result<(), AttackError> {
        if !(0.0..=1.0).contains(&self.max_edit_fraction) {
            return Err(AttackError::InvalidBudget(format!(
                "max_edit_fraction must lie in [0, 1], got {}",
                self.max_edit_fraction
            )));
        }
        for (name, v) in [
            ("max_queries", self.max_queries),
            ("beam_width", self.beam_width),
            ("expansions", self.expansions),
            ("max_depth", self.max_depth),
        ] {
            if v == 0 {
                return Err(AttackError::InvalidBudget(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Words that may be edited in a text of `words` words.
    pub fn max_edits(&self, words: usize) -> usize {
        (self.max_edit_fraction * words as f64 + 1e-9).floor() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Char,
    Word,
    Sentence,
    Multilevel,
}

impl AttackKind {
    pub const ALL: [AttackKind; 4] = [AttackKind::Char, AttackKind::Word, AttackKind::Sentence, AttackKind::Multilevel];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Char => "char",
            AttackKind::Word => "word",
            AttackKind::Sentence => "sentence",
            AttackKind::Multilevel => "multilevel",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackKind {
    type Err = AttackError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AttackKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| AttackError::UnknownAttack { name: s.to_string() })
    }
}

/// Result of attacking one text.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    pub adversarial: String,
    /// Target probability on `adversarial`.
    pub probability: f64,
    pub succeeded: bool,
    pub queries_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarialRecord {
    pub id: String,
    pub clean: String,
    pub label: Label,
    pub adversarial: String,
    pub succeeded: bool,
    pub attack: AttackKind,
    pub queries_used: usize,
    pub probability: f64,
}

/// Shared inputs of all attacks.
#[derive(Clone, Copy)]
pub struct AttackContext<'a> {
    pub lexicon: &'a SynonymLexicon,
    pub generator: &'a dyn Paraphraser,
    pub budget: AttackBudget,
}

pub fn run_attack(
    kind: AttackKind,
    target: &dyn Predictor,
    text: &str,
    y: Label,
    ctx: &AttackContext<'_>,
    seed: u64,
) -> Result<AttackOutcome> {
    match kind {
        AttackKind::Char => char_attack(target, text, y, &ctx.budget, seed),
        AttackKind::Word => word_attack(target, text, y, ctx.lexicon, &ctx.budget, seed),
        AttackKind::Sentence => sentence_attack(target, text, y, ctx.generator, &ctx.budget, seed),
        AttackKind::Multilevel => multilevel_attack(target, text, y, ctx.lexicon, ctx.generator, &ctx.budget, seed),
    }
}

/// Attacks every clean sample the target classifies correctly and returns
/// the crafted records plus the initially misclassified samples. Samples
/// are processed in parallel with per-sample seeds derived from their ids.
pub fn build_adversarial_dataset(
    data: &[LabeledText],
    target: &dyn Predictor,
    kind: AttackKind,
    ctx: &AttackContext<'_>,
    seed: u64,
) -> Result<(Vec<AdversarialRecord>, Vec<LabeledText>)> {
    ctx.budget.validate()?;
    let kinds = vec![kind; data.len()];
    build_mixed_adversarial_dataset(data, target, &kinds, ctx, seed)
}

/// Like [`build_adversarial_dataset`] with a per-sample attack choice.
pub fn build_mixed_adversarial_dataset(
    data: &[LabeledText],
    target: &dyn Predictor,
    kinds: &[AttackKind],
    ctx: &AttackContext<'_>,
    seed: u64,
) -> Result<(Vec<AdversarialRecord>, Vec<LabeledText>)> {
    assert_eq!(kinds.len(), data.len());
    ctx.budget.validate()?;
    let decision = target.decision();
    let results: Vec<Result<Option<AdversarialRecord>>> = data
        .par_iter()
        .zip(kinds.par_iter())
        .map(|(sample, &kind)| {
            let p0 = target.predict(&sample.text)?;
            if classify(p0, decision) != sample.label {
                return Ok(None);
            }
            let sample_seed = derive_seed_str(seed, &sample.id);
            let out = run_attack(kind, target, &sample.text, sample.label, ctx, sample_seed)?;
            Ok(Some(AdversarialRecord {
                id: sample.id.clone(),
                clean: sample.text.clone(),
                label: sample.label,
                adversarial: out.adversarial,
                succeeded: out.succeeded,
                attack: kind,
                queries_used: out.queries_used,
                probability: out.probability,
            }))
        })
        .collect();
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (sample, res) in data.iter().zip(results) {
        match res? {
            Some(r) => records.push(r),
            None => skipped.push(sample.clone()),
        }
    }
    Ok((records, skipped))
}

pub fn write_records_jsonl(records: &[AdversarialRecord], mut out: impl std::io::Write) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

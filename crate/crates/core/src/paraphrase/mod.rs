//! Paraphrase generation: `N` meaning-preserving variants of an input text.

mod lexicon;
mod llm;
mod rules;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lexicon::SynonymLexicon;
pub use llm::{parse_completion, LlmClient, LlmConfig, TOKEN_ENV_VAR};
pub use rules::{RuleBasedGenerator, RuleConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParaphraseError {
    #[error("text is empty after trimming")]
    EmptyText,
    #[error("endpoint {url} unreachable: {reason}")]
    EndpointUnreachable { url: String, reason: String },
    #[error("malformed completion response: {0}")]
    MalformedResponse(String),
    #[error("lexicon: {0}")]
    Lexicon(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    RuleBased,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParaphraseSet {
    pub original: String,
    pub variants: Vec<String>,
    pub provenance: Provenance,
    /// How many variants are copies of the original because the generator
    /// returned too few usable outputs.
    pub padded: usize,
}

impl ParaphraseSet {
    /// The original followed by its variants: the `N+1` matrix columns.
    pub fn samples(&self) -> Vec<&str> {
        std::iter::once(self.original.as_str()).chain(self.variants.iter().map(String::as_str)).collect()
    }
}

pub trait Paraphraser: Send + Sync {
    /// Exactly `n` variants of `text`, deterministic in `seed` where the
    /// backend allows it.
    fn paraphrase(&self, text: &str, n: usize, seed: u64) -> Result<ParaphraseSet, ParaphraseError>;
}

/// Instruction sent to an LLM to obtain `n` rephrasings of `text`.
pub fn build_prompt(text: &str, n: usize) -> String {
    format!(
        "The following text may contain adversarial perturbations generated by techniques such as word \
         misspelling, synonym substitution, and sentence rephrasing. Please generate {n} new texts by \
         rephrasing the input text while preserving its original meaning.\n\nINPUT {text}\n\nOUTPUT:"
    )
}

//! Seeded rule-based paraphrasing.
//!
//! Every variant is produced from the input by three label-neutral edits:
//! spelling normalization of out-of-dictionary tokens, synonym substitution
//! and function-word dropout. Protected keywords are never touched.

use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;

use super::{ParaphraseError, ParaphraseSet, Paraphraser, Provenance, SynonymLexicon};
use crate::rng::{derive_seed, rng_from_seed, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleConfig {
    /// Maximum fraction of words replaced by a synonym.
    pub synonym_rate: f64,
    /// Maximum fraction of words dropped (function words only).
    pub dropout_rate: f64,
    /// Probability that an out-of-dictionary token is replaced by a
    /// dictionary word one edit away.
    pub normalize_prob: f64,
}

impl Default for RuleConfig {
    fn default() -> Self {
        Self { synonym_rate: 0.3, dropout_rate: 0.1, normalize_prob: 0.8 }
    }
}

const RETRIES: u64 = 4;

#[derive(Debug, Clone)]
struct Token<'a> {
    prefix: &'a str,
    core: String,
    suffix: &'a str,
    capitalized: bool,
}

impl<'a> Token<'a> {
    fn parse(raw: &'a str) -> Self {
        let is_punct = |c: char| !c.is_alphanumeric();
        let start = raw.find(|c: char| !is_punct(c)).unwrap_or(raw.len());
        let end = raw.rfind(|c: char| !is_punct(c)).map_or(start, |i| i + raw[i..].chars().next().unwrap().len_utf8());
        let core = &raw[start..end.max(start)];
        Token {
            prefix: &raw[..start],
            core: core.to_lowercase(),
            suffix: &raw[end.max(start)..],
            capitalized: core.chars().next().is_some_and(char::is_uppercase),
        }
    }

    fn render(&self, out: &mut String) {
        out.push_str(self.prefix);
        if self.capitalized {
            let mut chars = self.core.chars();
            if let Some(first) = chars.next() {
                out.extend(first.to_uppercase());
                out.push_str(chars.as_str());
            }
        } else {
            out.push_str(&self.core);
        }
        out.push_str(self.suffix);
    }
}

#[derive(Debug, Clone)]
pub struct RuleBasedGenerator {
    lexicon: Arc<SynonymLexicon>,
    config: RuleConfig,
}

impl RuleBasedGenerator {
    pub fn new(lexicon: Arc<SynonymLexicon>, config: RuleConfig) -> Self {
        Self { lexicon, config }
    }

    pub fn bundled() -> Self {
        Self::new(Arc::new(SynonymLexicon::bundled()), RuleConfig::default())
    }

    pub fn lexicon(&self) -> &SynonymLexicon {
        &self.lexicon
    }

    fn variant(&self, tokens: &[Token<'_>], corrections: &HashMap<&str, Vec<String>>, rng: &mut Rng) -> String {
        let lex = &*self.lexicon;
        let len = tokens.len();
        let mut out: Vec<Token<'_>> = tokens.to_vec();
        let mut touched = vec![false; len];

        for (i, tok) in out.iter_mut().enumerate() {
            if let Some(cands) = corrections.get(tok.core.as_str()) {
                if !cands.is_empty() && rng.random::<f64>() < self.config.normalize_prob {
                    tok.core = cands.choose(rng).expect("non-empty").clone();
                    touched[i] = true;
                }
            }
        }

        let max_syn = (self.config.synonym_rate * len as f64).floor() as usize;
        let mut eligible: Vec<usize> = (0..len)
            .filter(|&i| !touched[i] && !lex.is_protected(&out[i].core) && !lex.synonyms(&out[i].core).is_empty())
            .collect();
        eligible.shuffle(rng);
        for &i in eligible.iter().take(max_syn) {
            let syn = lex.synonyms(&out[i].core).choose(rng).expect("non-empty").clone();
            out[i].core = syn;
            touched[i] = true;
        }

        let max_drop = (self.config.dropout_rate * len as f64).floor() as usize;
        let mut droppable: Vec<usize> = (0..len)
            .filter(|&i| !touched[i] && lex.is_function_word(&tokens[i].core) && !lex.is_protected(&tokens[i].core))
            .collect();
        droppable.shuffle(rng);
        let drop_count = rng.random_range(0..=max_drop.min(droppable.len()).min(len.saturating_sub(1)));
        let mut keep = vec![true; len];
        for &i in droppable.iter().take(drop_count) {
            keep[i] = false;
        }

        let mut text = String::new();
        for (tok, _) in out.iter().zip(&keep).filter(|(_, &k)| k) {
            if !text.is_empty() {
                text.push(' ');
            }
            tok.render(&mut text);
        }
        text
    }
}

impl Paraphraser for RuleBasedGenerator {
    fn paraphrase(&self, text: &str, n: usize, seed: u64) -> Result<ParaphraseSet, ParaphraseError> {
        let trimmed = text.trim();
        if trimmed.is_empty() {
            return Err(ParaphraseError::EmptyText);
        }
        let tokens: Vec<Token<'_>> = trimmed.split_whitespace().map(Token::parse).collect();
        let lex = &*self.lexicon;
        let mut corrections: HashMap<&str, Vec<String>> = HashMap::new();
        for tok in &tokens {
            let core = tok.core.as_str();
            if !core.is_empty() && !lex.contains(core) && !corrections.contains_key(core) {
                corrections.insert(core, lex.corrections(core));
            }
        }
        let canonical: String = tokens
            .iter()
            .fold(String::new(), |mut acc, t| {
                if !acc.is_empty() {
                    acc.push(' ');
                }
                t.render(&mut acc);
                acc
            });
        let variants = (0..n)
            .map(|i| {
                let mut attempt = String::new();
                for retry in 0..RETRIES {
                    let mut rng = rng_from_seed(derive_seed(derive_seed(seed, i as u64), retry));
                    attempt = self.variant(&tokens, &corrections, &mut rng);
                    if attempt != canonical {
                        break;
                    }
                }
                attempt
            })
            .collect();
        Ok(ParaphraseSet { original: text.to_string(), variants, provenance: Provenance::RuleBased, padded: 0 })
    }
}

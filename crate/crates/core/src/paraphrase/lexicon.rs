//! Synonym lexicon.
//!
//! File format (JSON, all words lowercase):
//!
//! ```json
//! {
//!   "synonyms": {"car": ["automobile", "vehicle"], "...": []},
//!   "protected": ["kill", "..."],
//!   "vocabulary": ["my", "to", "..."],
//!   "function_words": ["the", "very", "..."]
//! }
//! ```
//!
//! `synonyms` maps a word to its replacements; it need not be symmetric.
//! `protected` words are never edited by the rule-based generator.
//! `function_words` may be dropped. `vocabulary` lists further known words
//! that have no synonyms. All fields except `synonyms` are optional. The dictionary used for spelling normalization is the union of
//! every word that appears anywhere in the file.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ParaphraseError;

const BUNDLED: &str = include_str!("../../data/lexicon.json");

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LexiconFile {
    synonyms: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    protected: BTreeSet<String>,
    #[serde(default)]
    vocabulary: BTreeSet<String>,
    #[serde(default)]
    function_words: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynonymLexicon {
    file: LexiconFile,
    dictionary: HashSet<String>,
}

impl SynonymLexicon {
    pub fn from_json(text: &str) -> Result<Self, ParaphraseError> {
        let file: LexiconFile = serde_json::from_str(text).map_err(|e| ParaphraseError::Lexicon(e.to_string()))?;
        let words = file
            .synonyms
            .iter()
            .flat_map(|(k, v)| std::iter::once(k).chain(v))
            .chain(&file.protected)
            .chain(&file.vocabulary)
            .chain(&file.function_words);
        for w in words.clone() {
            if w.is_empty() || w.chars().any(|c| c.is_uppercase() || c.is_whitespace()) {
                return Err(ParaphraseError::Lexicon(format!("`{w}` is not a lowercase single word")));
            }
        }
        let dictionary = words.cloned().collect();
        Ok(Self { file, dictionary })
    }

    pub fn from_path(path: &Path) -> Result<Self, ParaphraseError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ParaphraseError::Lexicon(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// The lexicon shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED).expect("bundled lexicon is valid")
    }

    pub fn synonyms(&self, word: &str) -> &[String] {
        self.file.synonyms.get(word).map_or(&[], Vec::as_slice)
    }

    pub fn is_protected(&self, word: &str) -> bool {
        self.file.protected.contains(word)
    }

    pub fn is_function_word(&self, word: &str) -> bool {
        self.file.function_words.contains(word)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.dictionary.contains(word)
    }

    pub fn protected(&self) -> impl Iterator<Item = &str> {
        self.file.protected.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.file.synonyms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.file.synonyms.is_empty()
    }

    /// Dictionary words at Damerau-Levenshtein distance exactly one from
    /// `token`, sorted.
    pub fn corrections(&self, token: &str) -> Vec<String> {
        let chars: Vec<char> = token.chars().collect();
        let mut found = BTreeSet::new();
        let mut check = |cand: Vec<char>| {
            let s: String = cand.into_iter().collect();
            if s != token && self.dictionary.contains(&s) {
                found.insert(s);
            }
        };
        for i in 0..chars.len() {
            let mut del = chars.clone();
            del.remove(i);
            check(del);
            if i + 1 < chars.len() {
                let mut swap = chars.clone();
                swap.swap(i, i + 1);
                check(swap);
            }
            for c in 'a'..='z' {
                if c != chars[i] {
                    let mut sub = chars.clone();
                    sub[i] = c;
                    check(sub);
                }
            }
        }
        for i in 0..=chars.len() {
            for c in 'a'..='z' {
                let mut ins = chars.clone();
                ins.insert(i, c);
                check(ins);
            }
        }
        found.into_iter().collect()
    }
}

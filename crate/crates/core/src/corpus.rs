//! Labeled text datasets: JSONL I/O and a synthetic keyword-labeled corpus.
//!
//! Dataset files hold one JSON object per line:
//! `{"id": "s17", "text": "...", "label": 0}`. Ids must be unique, labels
//! 0 or 1 and texts non-empty. Blank lines are ignored.

use std::collections::HashSet;
use std::io::BufRead;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::tokenize;
use crate::matrix::Label;
use crate::paraphrase::SynonymLexicon;
use crate::rng::{rng_from_seed, Rng};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledText {
    pub id: String,
    pub text: String,
    pub label: Label,
}

impl LabeledText {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: Label) -> Self {
        Self { id: id.into(), text: text.into(), label }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("dataset is empty")]
    Empty,
}

/// Parses JSONL records; errors name the 1-based line.
pub fn parse_dataset(reader: impl BufRead) -> Result<Vec<LabeledText>, DatasetError> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| DatasetError::Invalid { line: line_no, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let invalid = |message: String| DatasetError::Invalid { line: line_no, message };
        let rec: LabeledText = serde_json::from_str(&line).map_err(|e| invalid(e.to_string()))?;
        if rec.text.trim().is_empty() {
            return Err(invalid("text is empty".into()));
        }
        if !ids.insert(rec.id.clone()) {
            return Err(invalid(format!("duplicate id `{}`", rec.id)));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn read_dataset(path: &Path) -> Result<Vec<LabeledText>, DatasetError> {
    let file = std::fs::File::open(path)
        .map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
    parse_dataset(std::io::BufReader::new(file))
}

pub fn write_dataset(data: &[LabeledText], mut out: impl std::io::Write) -> std::io::Result<()> {
    for rec in data {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Harmful iff some token is a protected keyword of the lexicon.
pub fn oracle_label(text: &str, lexicon: &SynonymLexicon) -> Label {
    if tokenize(text).iter().any(|t| lexicon.is_protected(t)) {
        Label::Harmful
    } else {
        Label::Benign
    }
}

const SUBJECTS: &[&str] = &[
    "my neighbor", "the teacher", "our coach", "the manager", "my friend", "the driver", "his brother",
    "her sister", "the student", "the farmer", "our team", "the crowd", "the mayor", "my cousin", "the doctor",
];
const PAST_VERBS: &[&str] = &[
    "fixed", "painted", "visited", "cleaned", "bought", "sold", "found", "moved", "washed", "checked", "built",
    "opened", "closed", "carried", "shared", "praised", "helped", "watched", "called", "met",
];
const BASE_VERBS: &[&str] = &[
    "fix", "paint", "visit", "clean", "buy", "sell", "find", "move", "wash", "check", "build", "open", "close",
    "carry", "share", "help", "watch", "call", "meet", "praise",
];
const OBJECTS: &[&str] = &[
    "car", "house", "garden", "fence", "shop", "bridge", "boat", "office", "kitchen", "school", "library",
    "bakery", "market", "truck", "window",
];
const PEOPLE: &[&str] =
    &["kids", "workers", "tourists", "visitors", "neighbors", "players", "students", "villagers", "fans", "guests"];
const ADJECTIVES: &[&str] =
    &["old", "new", "small", "big", "quiet", "busy", "red", "tidy", "empty", "famous", "local", "pretty"];
const TRAITS: &[&str] = &["friendly", "kind", "tired", "happy", "clever", "honest", "polite", "generous", "busy", "cheerful"];
const PLACES: &[&str] = &[
    "near the park", "by the river", "in the city", "at the station", "on the hill", "downtown",
    "across the street",
];
const TIMES: &[&str] =
    &["yesterday", "today", "tonight", "this morning", "last week", "on sunday", "after dinner", "before dawn"];
const FEELINGS: &[&str] = &["like", "love", "admire", "respect", "trust"];

/// Harmful keywords per role, each group ordered from common to rare.
const VIOLENT_GROUPS: &[&[&str]] = &[
    &["kill", "murder", "slaughter", "massacre", "execute"],
    &["attack", "assault", "ambush", "mug"],
    &["hurt", "harm", "injure", "maim", "cripple"],
    &["burn", "torch", "incinerate", "scorch"],
    &["threaten", "menace", "intimidate", "terrorize"],
    &["destroy", "annihilate", "obliterate", "demolish"],
    &["stab", "knife", "impale", "skewer"],
    &["bomb", "detonate", "firebomb"],
    &["strangle", "choke", "throttle", "suffocate"],
    &["punch", "thrash", "pummel", "batter"],
];
const INSULT_GROUPS: &[&[&str]] = &[&["vermin", "scum", "filth", "parasites", "rats"]];
const HATE_GROUPS: &[&[&str]] = &[&["hate", "despise", "loathe", "detest", "abhor"]];

/// Flattens keyword groups so that all first members come first, then all
/// second members, and so on; rank `r` is drawn with weight `1/(r+1)`.
fn zipf_pick<'a>(groups: &[&[&'a str]], rng: &mut Rng) -> &'a str {
    let depth = groups.iter().map(|g| g.len()).max().unwrap_or(0);
    let ranked: Vec<&str> = (0..depth).flat_map(|d| groups.iter().filter_map(move |g| g.get(d).copied())).collect();
    let total: f64 = (1..=ranked.len()).map(|r| 1.0 / r as f64).sum();
    let mut u = rng.random::<f64>() * total;
    for (r, w) in ranked.iter().enumerate() {
        u -= 1.0 / (r + 1) as f64;
        if u <= 0.0 {
            return w;
        }
    }
    ranked[ranked.len() - 1]
}

fn pick<'a>(items: &[&'a str], rng: &mut Rng) -> &'a str {
    items.choose(rng).expect("non-empty")
}

fn sentence(harmful: bool, rng: &mut Rng) -> String {
    let template = rng.random_range(0..4);
    let (subj, adj, obj, place, time, people) = (
        pick(SUBJECTS, rng),
        pick(ADJECTIVES, rng),
        pick(OBJECTS, rng),
        pick(PLACES, rng),
        pick(TIMES, rng),
        pick(PEOPLE, rng),
    );
    match (template, harmful) {
        (0, false) => format!("{subj} {} the {adj} {obj} {place} {time}", pick(PAST_VERBS, rng)),
        (0, true) => format!("{subj} will {} the {adj} {obj} {place} {time}", zipf_pick(VIOLENT_GROUPS, rng)),
        (1, false) => format!("{subj} wants to {} the {people} {time}", pick(BASE_VERBS, rng)),
        (1, true) => format!("{subj} wants to {} the {people} {time}", zipf_pick(VIOLENT_GROUPS, rng)),
        (2, false) => format!("{subj} said the {people} are {} {time}", pick(TRAITS, rng)),
        (2, true) => format!("{subj} said the {people} are {} {time}", zipf_pick(INSULT_GROUPS, rng)),
        (_, false) => format!("i really {} the {people} {place}", pick(FEELINGS, rng)),
        (_, true) => format!("i really {} the {people} {place}", zipf_pick(HATE_GROUPS, rng)),
    }
}

/// Synthetic corpus of `size` short sentences, a `harmful_fraction` of which
/// contain a harmful keyword. Keywords follow a Zipf law, so rare synonyms
/// are seen only a handful of times. Texts are unique.
pub fn toy_corpus(size: usize, harmful_fraction: f64, seed: u64) -> Vec<LabeledText> {
    let mut rng = rng_from_seed(seed);
    let harmful = (size as f64 * harmful_fraction).round() as usize;
    let mut labels: Vec<bool> = (0..size).map(|i| i < harmful).collect();
    labels.shuffle(&mut rng);
    let mut seen = HashSet::new();
    labels
        .into_iter()
        .enumerate()
        .map(|(i, h)| {
            let text = loop {
                let t = sentence(h, &mut rng);
                if seen.insert(t.clone()) {
                    break t;
                }
            };
            LabeledText::new(format!("toy-{i:04}"), text, if h { Label::Harmful } else { Label::Benign })
        })
        .collect()
}

/// Default bundled corpus: 500 samples, 40% harmful.
pub fn default_toy_corpus(seed: u64) -> Vec<LabeledText> {
    toy_corpus(500, 0.4, seed)
}

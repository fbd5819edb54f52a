use std::collections::{HashMap, HashSet};

use super::edits::{char_candidates, synonym_candidates, token_distance};
use super::{AttackBudget, AttackError, AttackOutcome, Predictor};
use crate::matrix::{classify, DecisionConfig, Label};
use crate::paraphrase::{Paraphraser, SynonymLexicon};
use crate::rng::{derive_seed, rng_from_seed};
use crate::Result;

/// Edit families available to the greedy word-level search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionSet {
    pub char: bool,
    pub synonym: bool,
    pub clause: bool,
}

impl ActionSet {
    pub const CHAR: ActionSet = ActionSet { char: true, synonym: false, clause: false };
    pub const WORD: ActionSet = ActionSet { char: false, synonym: true, clause: false };
    pub const ALL: ActionSet = ActionSet { char: true, synonym: true, clause: true };
}

/// Budgeted, memoized access to the target.
struct Oracle<'a> {
    target: &'a dyn Predictor,
    decision: DecisionConfig,
    y: Label,
    cache: HashMap<String, f64>,
    used: usize,
    max: usize,
}

impl<'a> Oracle<'a> {
    fn new(target: &'a dyn Predictor, y: Label, max: usize) -> Self {
        Self { target, decision: target.decision(), y, cache: HashMap::new(), used: 0, max }
    }

    /// `None` once the query budget is spent.
    fn query(&mut self, text: &str) -> Result<Option<f64>> {
        if let Some(&p) = self.cache.get(text) {
            return Ok(Some(p));
        }
        if self.used >= self.max {
            return Ok(None);
        }
        self.used += 1;
        let p = self.target.predict(text)?;
        self.cache.insert(text.to_string(), p);
        Ok(Some(p))
    }

    /// Probability of the true class; attacks minimize it.
    fn score(&self, p: f64) -> f64 {
        self.y.likelihood(p)
    }

    fn flipped(&self, p: f64) -> bool {
        classify(p, self.decision) != self.y
    }

    fn start(&mut self, x: &str) -> Result<f64> {
        let p0 = self.query(x)?.expect("budget allows at least one query");
        if self.flipped(p0) {
            return Err(AttackError::Misclassified { probability: p0, label: self.y.as_u8() }.into());
        }
        Ok(p0)
    }

    fn outcome(&self, adversarial: String, probability: f64) -> AttackOutcome {
        AttackOutcome { succeeded: self.flipped(probability), adversarial, probability, queries_used: self.used }
    }
}

/// `|p(x) - p(x without word i)|` for every whitespace-separated word.
/// A single-word text gets score 0.
pub fn word_importance(target: &dyn Predictor, x: &str) -> Result<Vec<f64>> {
    let tokens: Vec<&str> = x.split_whitespace().collect();
    if tokens.len() <= 1 {
        return Ok(vec![0.0; tokens.len()]);
    }
    let p0 = target.predict(x)?;
    (0..tokens.len())
        .map(|i| Ok((p0 - target.predict(&without(&tokens, i))?).abs()))
        .collect()
}

fn without(tokens: &[&str], i: usize) -> String {
    tokens.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, t)| *t).collect::<Vec<_>>().join(" ")
}

fn replace_span(tokens: &[String], lo: usize, hi: usize, with: &[&str]) -> Vec<String> {
    tokens[..lo]
        .iter()
        .cloned()
        .chain(with.iter().map(|s| s.to_string()))
        .chain(tokens[hi..].iter().cloned())
        .collect()
}

/// Importance-ranked greedy search: words are visited from most to least
/// important; each gets the best candidate from the enabled action families
/// if that candidate lowers the true-class probability. Stops on a flip, when
/// the edit budget is used up, or when the query budget runs out.
pub fn greedy_attack(
    target: &dyn Predictor,
    x: &str,
    y: Label,
    actions: ActionSet,
    lexicon: Option<&SynonymLexicon>,
    generator: Option<&dyn Paraphraser>,
    budget: &AttackBudget,
    seed: u64,
) -> Result<AttackOutcome> {
    budget.validate()?;
    let mut oracle = Oracle::new(target, y, budget.max_queries);
    let p0 = oracle.start(x)?;
    let originals: Vec<&str> = x.split_whitespace().collect();
    let len = originals.len();
    let max_edits = budget.max_edits(len);
    if max_edits == 0 {
        return Ok(oracle.outcome(x.to_string(), p0));
    }

    let mut importance = vec![0.0; len];
    if len > 1 {
        for (i, slot) in importance.iter_mut().enumerate() {
            match oracle.query(&without(&originals, i))? {
                Some(p) => *slot = (p0 - p).abs(),
                None => return Ok(oracle.outcome(x.to_string(), p0)),
            }
        }
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.sort_by(|&a, &b| importance[b].total_cmp(&importance[a]).then(a.cmp(&b)));

    let mut rng = rng_from_seed(seed);
    let mut current: Vec<String> = originals.iter().map(|s| s.to_string()).collect();
    let mut cur_text = x.to_string();
    let mut cur_p = p0;
    for i in order {
        if token_distance(&cur_text, x) >= max_edits {
            break;
        }
        let mut candidates: Vec<Vec<String>> = Vec::new();
        if actions.char {
            for c in char_candidates(&current[i], &mut rng) {
                candidates.push(replace_span(&current, i, i + 1, &[&c]));
            }
        }
        if actions.synonym {
            if let Some(lex) = lexicon {
                for s in synonym_candidates(&current[i], lex) {
                    candidates.push(replace_span(&current, i, i + 1, &[&s]));
                }
            }
        }
        if actions.clause {
            if let Some(gen) = generator {
                let (lo, hi) = (i.saturating_sub(1), (i + 2).min(len));
                let window = current[lo..hi].join(" ");
                let set = gen.paraphrase(&window, budget.expansions, derive_seed(seed, i as u64))?;
                for v in &set.variants {
                    let words: Vec<&str> = v.split_whitespace().collect();
                    if words.len() == hi - lo && *v != window {
                        candidates.push(replace_span(&current, lo, hi, &words));
                    }
                }
            }
        }

        let mut seen = HashSet::new();
        let mut best: Option<(f64, Vec<String>, String, f64)> = None;
        let mut exhausted = false;
        for cand in candidates {
            let text = cand.join(" ");
            if !seen.insert(text.clone()) || token_distance(&text, x) > max_edits {
                continue;
            }
            let Some(p) = oracle.query(&text)? else {
                exhausted = true;
                break;
            };
            let s = oracle.score(p);
            if best.as_ref().is_none_or(|b| s < b.0) {
                best = Some((s, cand, text, p));
            }
        }
        if let Some((s, cand, text, p)) = best {
            if s < oracle.score(cur_p) {
                current = cand;
                cur_text = text;
                cur_p = p;
                if oracle.flipped(p) {
                    break;
                }
            }
        }
        if exhausted {
            break;
        }
    }
    Ok(oracle.outcome(cur_text, cur_p))
}

/// Character-level attack: one substitution, duplicate insertion, deletion
/// and adjacent swap per visited word.
pub fn char_attack(target: &dyn Predictor, x: &str, y: Label, budget: &AttackBudget, seed: u64) -> Result<AttackOutcome> {
    greedy_attack(target, x, y, ActionSet::CHAR, None, None, budget, seed)
}

/// Word-level attack: lexicon synonym swaps on the most important words.
pub fn word_attack(
    target: &dyn Predictor,
    x: &str,
    y: Label,
    lexicon: &SynonymLexicon,
    budget: &AttackBudget,
    seed: u64,
) -> Result<AttackOutcome> {
    greedy_attack(target, x, y, ActionSet::WORD, Some(lexicon), None, budget, seed)
}

/// Mixed character, synonym and clause-paraphrase edits, best action first.
pub fn multilevel_attack(
    target: &dyn Predictor,
    x: &str,
    y: Label,
    lexicon: &SynonymLexicon,
    generator: &dyn Paraphraser,
    budget: &AttackBudget,
    seed: u64,
) -> Result<AttackOutcome> {
    greedy_attack(target, x, y, ActionSet::ALL, Some(lexicon), Some(generator), budget, seed)
}

/// Beam search over whole-text paraphrases. Each round expands every live
/// hypothesis into `expansions` paraphrases, keeps those within the edit
/// budget of `x`, and retains the `beam_width` with the lowest true-class
/// probability (ties broken lexicographically).
pub fn sentence_attack(
    target: &dyn Predictor,
    x: &str,
    y: Label,
    generator: &dyn Paraphraser,
    budget: &AttackBudget,
    seed: u64,
) -> Result<AttackOutcome> {
    budget.validate()?;
    let mut oracle = Oracle::new(target, y, budget.max_queries);
    let p0 = oracle.start(x)?;
    let max_edits = budget.max_edits(x.split_whitespace().count());
    let mut best = (x.to_string(), p0);
    let mut beam = vec![x.to_string()];
    let mut seen: HashSet<String> = HashSet::from([x.to_string()]);
    'rounds: for depth in 0..budget.max_depth {
        let mut cands: Vec<(f64, String, f64)> = Vec::new();
        let mut exhausted = false;
        for (b, text) in beam.iter().enumerate() {
            let node_seed = derive_seed(derive_seed(seed, depth as u64), b as u64);
            let set = generator.paraphrase(text, budget.expansions, node_seed)?;
            for v in set.variants {
                if token_distance(&v, x) > max_edits || !seen.insert(v.clone()) {
                    continue;
                }
                let Some(p) = oracle.query(&v)? else {
                    exhausted = true;
                    break;
                };
                cands.push((oracle.score(p), v, p));
            }
            if exhausted {
                break;
            }
        }
        if cands.is_empty() {
            break;
        }
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        if cands[0].0 < oracle.score(best.1) {
            best = (cands[0].1.clone(), cands[0].2);
            if oracle.flipped(best.1) {
                break 'rounds;
            }
        }
        if exhausted {
            break;
        }
        cands.truncate(budget.beam_width);
        beam = cands.into_iter().map(|c| c.1).collect();
    }
    Ok(oracle.outcome(best.0, best.1))
}

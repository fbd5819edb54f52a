use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use robust_ensemble::assignor::{AssignorConfig, AssignorParams};
use robust_ensemble::attack::{
    build_adversarial_dataset, char_attack, char_distance, greedy_attack, multilevel_attack, sentence_attack,
    word_attack, word_importance, ActionSet, AttackBudget, AttackContext, AttackKind, FnPredictor, Predictor,
};
use robust_ensemble::corpus::{toy_corpus, LabeledText};
use robust_ensemble::detector::{default_spaces, Detector};
use robust_ensemble::model::EnsembleModel;
use robust_ensemble::paraphrase::{
    ParaphraseError, ParaphraseSet, Paraphraser, Provenance, RuleBasedGenerator, SynonymLexicon,
};
use robust_ensemble::prior::PriorConfig;
use robust_ensemble::train::{iat_train, split_datasets, TrainConfig, TrainContext};
use robust_ensemble::{Label, Result};

/// Linear score over word counts pushed through a sigmoid.
fn keyword_target(weights: &'static [(&'static str, f64)], bias: f64) -> FnPredictor<impl Fn(&str) -> Result<f64> + Sync> {
    FnPredictor(move |t: &str| {
        let z: f64 = bias
            + t.split_whitespace()
                .map(|w| weights.iter().find(|(k, _)| *k == w).map_or(0.0, |(_, v)| *v))
                .sum::<f64>();
        Ok(1.0 / (1.0 + (-z).exp()))
    })
}

struct Counting<'a> {
    inner: &'a dyn Predictor,
    calls: AtomicUsize,
}

impl Predictor for Counting<'_> {
    fn predict(&self, text: &str) -> Result<f64> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.predict(text)
    }
}

/// Returns a fixed list of variants regardless of the input.
struct Fixed(Vec<String>);

impl Paraphraser for Fixed {
    fn paraphrase(&self, text: &str, n: usize, _seed: u64) -> std::result::Result<ParaphraseSet, ParaphraseError> {
        let mut variants: Vec<String> = self.0.iter().take(n).cloned().collect();
        let padded = n - variants.len();
        variants.resize(n, text.to_string());
        Ok(ParaphraseSet { original: text.into(), variants, provenance: Provenance::RuleBased, padded })
    }
}

#[test]
fn importance_of_a_single_word_text() {
    let t = keyword_target(&[("kill", 3.0)], -1.0);
    assert_eq!(word_importance(&t, "kill").unwrap(), vec![0.0]);
}

#[test]
fn ignored_words_have_zero_importance() {
    let t = keyword_target(&[("kill", 3.0)], -1.0);
    let scores = word_importance(&t, "they will kill him").unwrap();
    assert_eq!(scores.len(), 4);
    assert_eq!((scores[0], scores[1], scores[3]), (0.0, 0.0, 0.0));
    assert!(scores[2] > 0.0);
}

#[test]
fn importance_matches_brute_force_deletions() {
    let t = keyword_target(&[("kill", 3.0), ("them", 0.5), ("now", -0.7), ("all", 0.2)], -1.0);
    let x = "kill them all now please all";
    let words: Vec<&str> = x.split_whitespace().collect();
    let p0 = t.predict(x).unwrap();
    let expected: Vec<f64> = (0..words.len())
        .map(|i| {
            let rest: Vec<&str> = words.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, w)| *w).collect();
            (p0 - t.predict(&rest.join(" ")).unwrap()).abs()
        })
        .collect();
    assert_eq!(word_importance(&t, x).unwrap(), expected);
}

#[test]
fn zero_budget_leaves_the_text_alone() {
    let t = keyword_target(&[("kill", 3.0)], -1.0);
    let budget = AttackBudget { max_edit_fraction: 0.0, ..Default::default() };
    let out = char_attack(&t, "we will kill them", Label::Harmful, &budget, 1).unwrap();
    assert_eq!(out.adversarial, "we will kill them");
    assert!(!out.succeeded);
}

#[test]
fn char_edits_change_one_character_per_word() {
    let t = keyword_target(&[("kill", 2.0), ("burn", 2.0), ("them", 0.5)], -1.5);
    let x = "we kill and burn them all";
    for seed in 0..20 {
        let budget = AttackBudget { max_edit_fraction: 1.0, ..Default::default() };
        let out = char_attack(&t, x, Label::Harmful, &budget, seed).unwrap();
        let a: Vec<&str> = out.adversarial.split_whitespace().collect();
        let b: Vec<&str> = x.split_whitespace().collect();
        assert_eq!(a.len(), b.len());
        for (u, v) in a.iter().zip(&b) {
            assert!(u == v || char_distance(u, v) == 1, "{u} vs {v}");
        }
    }
}

#[test]
fn editing_the_only_evidence_flips_the_prediction() {
    // barely positive: sigmoid(0.05)
    let t = keyword_target(&[("attackword", 1.0)], -0.95);
    let out = char_attack(&t, "please attackword now", Label::Harmful, &AttackBudget { max_edit_fraction: 0.34, ..Default::default() }, 3)
        .unwrap();
    assert!(out.succeeded);
    assert!(!out.adversarial.split_whitespace().any(|w| w == "attackword"));
    assert!(out.probability <= 0.5);
}

#[test]
fn words_outside_the_lexicon_are_skipped() {
    let lexicon = SynonymLexicon::bundled();
    assert!(lexicon.synonyms("zxqv").is_empty());
    let t = keyword_target(&[("zxqv", 3.0)], -1.0);
    let out = word_attack(&t, "zxqv zxqv", Label::Harmful, &lexicon, &AttackBudget { max_edit_fraction: 1.0, ..Default::default() }, 0)
        .unwrap();
    assert_eq!(out.adversarial, "zxqv zxqv");
    assert!(!out.succeeded);
}

#[test]
fn replacements_come_from_the_lexicon_entry() {
    let lexicon = SynonymLexicon::bundled();
    let t = keyword_target(&[("ambush", 3.0), ("aid", 1.0)], -2.0);
    let x = "they ambush and aid us";
    let out = word_attack(&t, x, Label::Harmful, &lexicon, &AttackBudget { max_edit_fraction: 1.0, ..Default::default() }, 0).unwrap();
    for (new, old) in out.adversarial.split_whitespace().zip(x.split_whitespace()) {
        if new != old {
            assert!(lexicon.synonyms(old).iter().any(|s| s == new), "{old} -> {new}");
        }
    }
    assert_ne!(out.adversarial, x);
}

#[test]
fn greedy_word_attack_beats_every_single_swap() {
    let lexicon = SynonymLexicon::bundled();
    let t = keyword_target(&[("ambush", 2.0), ("assault", 1.5), ("aid", 0.6), ("help", 0.9), ("attack", 2.2)], -3.5);
    let x = "we ambush them and aid the ambush";
    let budget = AttackBudget { max_edit_fraction: 1.0, ..Default::default() };
    let out = word_attack(&t, x, Label::Harmful, &lexicon, &budget, 0).unwrap();
    let words: Vec<&str> = x.split_whitespace().collect();
    let mut best = t.predict(x).unwrap();
    for i in 0..words.len() {
        for s in lexicon.synonyms(words[i]) {
            let mut w: Vec<&str> = words.clone();
            w[i] = s;
            best = best.min(t.predict(&w.join(" ")).unwrap());
        }
    }
    assert!(out.probability <= best + 1e-15, "{} > {best}", out.probability);
}

#[test]
fn degenerate_beam_returns_the_best_paraphrase() {
    let t = keyword_target(&[("kill", 3.0), ("hurt", 2.0), ("harm", 2.5)], -1.0);
    let variants: Vec<String> = ["we hurt them", "we harm them", "we kill them now"].map(String::from).to_vec();
    let gen = Fixed(variants.clone());
    let budget = AttackBudget { beam_width: 1, max_depth: 1, expansions: 3, max_edit_fraction: 1.0, ..Default::default() };
    let out = sentence_attack(&t, "we kill them", Label::Harmful, &gen, &budget, 0).unwrap();
    let best = variants.iter().min_by(|a, b| t.predict(a).unwrap().total_cmp(&t.predict(b).unwrap())).unwrap();
    assert_eq!(&out.adversarial, best);
}

#[test]
fn closed_search_space_cannot_succeed() {
    let t = keyword_target(&[("kill", 3.0)], -1.0);
    let out = sentence_attack(&t, "we kill them", Label::Harmful, &Fixed(vec![]), &AttackBudget::default(), 0).unwrap();
    assert_eq!(out.adversarial, "we kill them");
    assert!(!out.succeeded);
}

#[test]
fn word_only_action_set_is_the_word_attack() {
    let lexicon = SynonymLexicon::bundled();
    let gen = RuleBasedGenerator::bundled();
    let t = keyword_target(&[("ambush", 2.0), ("aid", 0.6), ("attack", 2.2)], -1.5);
    let budget = AttackBudget { max_edit_fraction: 1.0, ..Default::default() };
    for x in ["we ambush them and aid the ambush", "attack now", "they aid and ambush"] {
        let a = greedy_attack(&t, x, Label::Harmful, ActionSet::WORD, Some(&lexicon), Some(&gen), &budget, 7).unwrap();
        let b = word_attack(&t, x, Label::Harmful, &lexicon, &budget, 7).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn query_budget_is_respected() {
    let lexicon = SynonymLexicon::bundled();
    let gen = RuleBasedGenerator::bundled();
    let inner = keyword_target(&[("kill", 0.4), ("ambush", 0.4), ("burn", 0.4), ("hurt", 0.4)], 2.0);
    for max_queries in [1, 2, 5, 17, 60] {
        let t = Counting { inner: &inner, calls: AtomicUsize::new(0) };
        let budget = AttackBudget { max_queries, max_edit_fraction: 1.0, ..Default::default() };
        let out = multilevel_attack(&t, "we will kill and ambush and burn and hurt them", Label::Harmful, &lexicon, &gen, &budget, 0)
            .unwrap();
        assert!(out.queries_used <= max_queries);
        assert_eq!(t.calls.load(Ordering::Relaxed), out.queries_used);
    }
}

fn data() -> Vec<LabeledText> {
    toy_corpus(40, 0.5, 3)
}

#[test]
fn always_wrong_target_skips_everything() {
    let lexicon = SynonymLexicon::bundled();
    let gen = RuleBasedGenerator::bundled();
    let ctx = AttackContext { lexicon: &lexicon, generator: &gen, budget: AttackBudget::default() };
    let d = data();
    let oracle = |t: &str| d.iter().find(|s| s.text == t).map(|s| s.label);
    let wrong = FnPredictor(|t: &str| Ok(if oracle(t) == Some(Label::Harmful) { 0.0 } else { 1.0 }));
    let (records, skipped) = build_adversarial_dataset(&d, &wrong, AttackKind::Char, &ctx, 0).unwrap();
    assert!(records.is_empty());
    assert_eq!(skipped, d);
}

#[test]
fn unflippable_target_yields_only_failed_records() {
    let lexicon = SynonymLexicon::bundled();
    let gen = RuleBasedGenerator::bundled();
    let ctx = AttackContext { lexicon: &lexicon, generator: &gen, budget: AttackBudget::default() };
    let d: Vec<LabeledText> = data().into_iter().filter(|s| s.label == Label::Harmful).collect();
    let always = FnPredictor(|_: &str| Ok(1.0));
    for kind in AttackKind::ALL {
        let (records, skipped) = build_adversarial_dataset(&d, &always, kind, &ctx, 0).unwrap();
        assert_eq!(records.len(), d.len());
        assert!(skipped.is_empty());
        assert!(records.iter().all(|r| !r.succeeded));
    }
}

#[test]
fn records_and_skips_partition_the_input() {
    let lexicon = SynonymLexicon::bundled();
    let gen = RuleBasedGenerator::bundled();
    let ctx = AttackContext { lexicon: &lexicon, generator: &gen, budget: AttackBudget::default() };
    let d = data();
    let t = keyword_target(&[("kill", 3.0), ("hate", 3.0), ("attack", 3.0), ("hurt", 3.0)], -1.0);
    let (records, skipped) = build_adversarial_dataset(&d, &t, AttackKind::Word, &ctx, 0).unwrap();
    assert_eq!(records.len() + skipped.len(), d.len());
    let mut ids: Vec<&str> = records.iter().map(|r| r.id.as_str()).chain(skipped.iter().map(|s| s.id.as_str())).collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), d.len());
    for r in &records {
        assert_eq!(r.succeeded, (t.predict(&r.adversarial).unwrap() > 0.5) != (r.label == Label::Harmful));
    }
    let again = build_adversarial_dataset(&d, &t, AttackKind::Word, &ctx, 0).unwrap();
    assert_eq!(again.0, records);
}

#[test]
fn multilevel_is_at_least_as_strong_as_char_or_word() {
    let data = toy_corpus(400, 0.4, 21);
    let split = split_datasets(&data, 0.6, 1).unwrap();
    let gen = RuleBasedGenerator::bundled();
    let lexicon = Arc::new(gen.lexicon().clone());
    let space = default_spaces(1, 1 << 16).remove(0);
    let init = EnsembleModel { detectors: vec![Detector::new(space)], assignor: AssignorParams::init(AssignorConfig::default(), 0) };
    let cfg = TrainConfig { alternations: 1, detector_epochs: 0, assignor_epochs: 0, ..Default::default() };
    let ctx = TrainContext { generator: &gen, lexicon: &lexicon, budget: Default::default(), prior: PriorConfig::default(), attacks: vec![] };
    let model = iat_train(&split.d_bd, &cfg, &ctx, init).unwrap().model;
    let det = &model.detectors[0];
    let target = FnPredictor(|t: &str| Ok(det.predict(t)?));
    let actx = AttackContext { lexicon: &lexicon, generator: &gen, budget: AttackBudget::default() };
    let fooled = |kind| {
        let (records, _) = build_adversarial_dataset(&split.d_ag, &target, kind, &actx, 5).unwrap();
        records.iter().filter(|r| r.succeeded).count()
    };
    let (c, w, m) = (fooled(AttackKind::Char), fooled(AttackKind::Word), fooled(AttackKind::Multilevel));
    assert!(m + 1 >= c.max(w), "multilevel {m}, char {c}, word {w}");
}

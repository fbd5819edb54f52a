//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test --test acceptance -- 7 8`.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use robust_ensemble::assignor::{
    assignor_gradients, kl_lognormal, AssignorConfig, AssignorExample, AssignorParams,
};
use robust_ensemble::attack::{build_mixed_adversarial_dataset, AttackContext, AttackKind, FnPredictor};
use robust_ensemble::corpus::{default_toy_corpus, toy_corpus, LabeledText};
use robust_ensemble::detector::{default_spaces, ClassWeights, Detector, FeatureSpace, FeatureMix, TextFeatures};
use robust_ensemble::eval::{
    after_attack_metrics, ensemble_bound, single_bound, verify_ensemble_bound, verify_single_bound, BoundScenario,
    DrawFamily, MetricsReport,
};
use robust_ensemble::matrix::{aggregate_uniform, matrix_stats, Label, PredictionMatrix, WeightMatrix};
use robust_ensemble::model::{EnsembleModel, InferenceConfig, InferenceMode, Pipeline};
use robust_ensemble::paraphrase::{RuleBasedGenerator, SynonymLexicon};
use robust_ensemble::prior::{LogNormalParams, PriorConfig};
use robust_ensemble::rng::{derive_seed, rng_from_seed};
use robust_ensemble::train::{
    iat_train, loss_ag, loss_bd_with_weights, split_datasets, Adam, AdamConfig, BdExample, TrainConfig, TrainContext,
};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

type Criterion = (usize, &'static str, fn() -> Outcome);

const CRITERIA: &[Criterion] = &[
    (1, "single-detector bound soundness", criterion_1),
    (2, "ensemble bound soundness", criterion_2),
    (3, "Brier decomposition identities", criterion_3),
    (4, "log-normal KL", criterion_4),
    (5, "gradient checks", criterion_5),
    (6, "assignor-only training decreases -ELBO", criterion_6),
    (7, "ASR non-increasing in N", criterion_7),
    (8, "ensemble ASR below every single detector", criterion_8),
    (9, "ablation ordering", criterion_9),
    (10, "MC/plugin agreement", criterion_10),
    (11, "end-to-end determinism", criterion_11),
];

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for &(id, name, run) in CRITERIA {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        let status = if out.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {status}  {name}: {} [{:.1}s]", out.detail, start.elapsed().as_secs_f64());
        if !out.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- bounds

fn random_scenario(rng: &mut impl Rng, detectors: usize, seed: u64) -> BoundScenario {
    loop {
        let label = if rng.random::<bool>() { Label::Harmful } else { Label::Benign };
        let family = if rng.random::<bool>() { DrawFamily::Beta } else { DrawFamily::TwoPoint };
        let epsilon = rng.random_range(0.3..0.7);
        let mu: Vec<f64> = (0..detectors)
            .map(|_| match label {
                Label::Harmful => rng.random_range(epsilon..1.0),
                Label::Benign => rng.random_range(0.0..epsilon),
            })
            .collect();
        let sigma_sq: Vec<f64> = mu
            .iter()
            .map(|&m| {
                let cap = match family {
                    DrawFamily::Beta => m * (1.0 - m),
                    DrawFamily::TwoPoint => m.min(1.0 - m).powi(2),
                };
                cap * rng.random::<f64>()
            })
            .collect();
        let s = BoundScenario {
            mu,
            sigma_sq,
            epsilon,
            generated: rng.random_range(0..=8),
            label,
            trials: 10_000,
            family,
            seed,
        };
        if s.validate().is_ok() && s.delta() > 0.02 {
            return s;
        }
    }
}

fn bound_suite(detectors: impl Fn(&mut robust_ensemble::rng::Rng) -> usize, seed: u64) -> (usize, usize, f64, f64) {
    let mut rng = rng_from_seed(seed);
    let scenarios: Vec<BoundScenario> =
        (0..200).map(|i| { let m = detectors(&mut rng); random_scenario(&mut rng, m, i) }).collect();
    let start = Instant::now();
    let mut ok = 0;
    let mut informative = 0;
    let mut worst = f64::INFINITY;
    for s in &scenarios {
        let c = if s.detectors() == 1 { verify_single_bound(s) } else { verify_ensemble_bound(s) }.unwrap();
        if c.holds(3.0) {
            ok += 1;
        }
        if c.bound > 0.0 {
            informative += 1;
            worst = worst.min((c.empirical - c.bound) / c.std_error.max(1e-12));
        }
    }
    (ok, informative, worst, start.elapsed().as_secs_f64())
}

fn criterion_1() -> Outcome {
    let (ok, informative, worst, secs) = bound_suite(|_| 1, 101);
    Outcome::new(
        ok == 200 && secs < 120.0,
        format!("{ok}/200 within 3 SE ({informative} with positive bound, min slack {worst:.1} SE), {secs:.1}s"),
    )
}

fn criterion_2() -> Outcome {
    let (ok, informative, worst, secs) = bound_suite(|r| r.random_range(2..=6), 202);
    let mut rng = rng_from_seed(7);
    let mut max_gap: f64 = 0.0;
    for _ in 0..1000 {
        let s: f64 = rng.random_range(0.0..0.25);
        let n = rng.random_range(0..20);
        let d: f64 = rng.random_range(0.01..0.5);
        max_gap = max_gap.max((ensemble_bound(&[s], n, d) - single_bound(s, n, d)).abs());
    }
    Outcome::new(
        ok == 200 && secs < 120.0 && max_gap <= 1e-12,
        format!(
            "{ok}/200 within 3 SE ({informative} with positive bound, min slack {worst:.1} SE), {secs:.1}s; \
             M=1 reduction gap {max_gap:.1e}"
        ),
    )
}

// ------------------------------------------------------- identity suites

fn random_matrix(rng: &mut impl Rng) -> PredictionMatrix {
    let rows = rng.random_range(1..=6);
    let cols = rng.random_range(1..=9);
    PredictionMatrix::new(rows, cols, (0..rows * cols).map(|_| rng.random::<f64>()).collect()).unwrap()
}

fn criterion_3() -> Outcome {
    let mut rng = rng_from_seed(303);
    let mut max_err: f64 = 0.0;
    for _ in 0..1000 {
        let p = random_matrix(&mut rng);
        let y = if rng.random::<bool>() { Label::Harmful } else { Label::Benign };
        let yf = y.as_f64();
        let stats = matrix_stats(&p, y);
        let (rows, cols) = p.shape();
        for n in 0..cols {
            let xs: Vec<f64> = (0..rows).map(|m| p.get(m, n)).collect();
            let (brier, mean, var) = naive(&xs, yf);
            max_err = max_err
                .max((stats.col_brier[n] - brier).abs())
                .max((stats.moments.col_mean[n] - mean).abs())
                .max((stats.moments.col_var[n] - var).abs())
                .max((stats.col_brier[n] - (stats.moments.col_var[n] + (stats.moments.col_mean[n] - yf).powi(2))).abs());
        }
        for m in 0..rows {
            let (brier, mean, var) = naive(p.row(m), yf);
            max_err = max_err
                .max((stats.row_brier[m] - brier).abs())
                .max((stats.moments.row_mean[m] - mean).abs())
                .max((stats.moments.row_var[m] - var).abs())
                .max((stats.row_brier[m] - (stats.moments.row_var[m] + (stats.moments.row_mean[m] - yf).powi(2))).abs());
        }
    }
    Outcome::new(max_err <= 1e-12, format!("max deviation {max_err:.1e} over 1000 matrices"))
}

/// Brier score, mean and population variance by direct summation.
fn naive(xs: &[f64], y: f64) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let brier = xs.iter().map(|x| (x - y) * (x - y)).sum::<f64>() / n;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (brier, mean, var)
}

fn lognormal_log_density(x: f64, p: &LogNormalParams) -> f64 {
    let l = x.ln();
    -l - 0.5 * (2.0 * std::f64::consts::PI * p.variance).ln() - (l - p.mean).powi(2) / (2.0 * p.variance)
}

fn criterion_4() -> Outcome {
    let mut rng = rng_from_seed(404);
    let draws = 4_000_000;
    let mut max_err: f64 = 0.0;
    let mut min_kl = f64::INFINITY;
    let mut nonzero = true;
    for i in 0..50 {
        let q = LogNormalParams { mean: rng.random_range(-1.0..1.0), variance: rng.random_range(0.5..2.0) };
        let p = LogNormalParams { mean: rng.random_range(-1.0..1.0), variance: rng.random_range(0.5..2.0) };
        let kl = kl_lognormal(&q, &p);
        min_kl = min_kl.min(kl);
        let mut mc_rng = rng_from_seed(derive_seed(404, i));
        let sd = q.variance.sqrt();
        let mut acc = 0.0;
        for _ in 0..draws {
            let z: f64 = StandardNormal.sample(&mut mc_rng);
            let x = (q.mean + sd * z).exp();
            acc += lognormal_log_density(x, &q) - lognormal_log_density(x, &p);
        }
        max_err = max_err.max((acc / draws as f64 - kl).abs());
        let bumped = LogNormalParams { mean: q.mean + 1e-3, ..q };
        nonzero &= kl_lognormal(&q, &q) == 0.0 && kl_lognormal(&bumped, &q) > 0.0 && kl > 0.0;
    }
    Outcome::new(
        max_err <= 1e-2 && min_kl >= 0.0 && nonzero,
        format!("max |closed form - MC| {max_err:.2e}, min KL {min_kl:.3e}, zero exactly at equality: {nonzero}"),
    )
}

// --------------------------------------------------------------- gradients

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn criterion_5() -> Outcome {
    let (det, det_checked) = detector_gradient_check();
    let (ag, ag_checked) = assignor_gradient_check();
    Outcome::new(
        det <= 1e-4 && ag <= 1e-4,
        format!(
            "detector loss: max rel err {det:.1e} over {det_checked} coordinates; \
             assignor -ELBO: max rel err {ag:.1e} over {ag_checked} parameters"
        ),
    )
}

fn detector_gradient_check() -> (f64, usize) {
    let dim = 32;
    let mut rng = rng_from_seed(505);
    let spaces = [FeatureMix::Both, FeatureMix::Words, FeatureMix::Chars];
    let mut detectors: Vec<Detector> = spaces
        .iter()
        .enumerate()
        .map(|(i, &mix)| {
            let mut d = Detector::new(FeatureSpace { dim, mix, hash_seed: i as u64, keep_rate: 1.0 });
            d.params.weights.iter_mut().for_each(|w| *w = rng.random_range(-0.5..0.5));
            d.params.bias = rng.random_range(-0.5..0.5);
            d
        })
        .collect();
    let texts = [
        ["they will attack us", "they plan to attack us", "they attack us"],
        ["the farmer sold a boat", "a farmer sold the boat", "the farmer sold boats"],
    ];
    let batch: Vec<BdExample> = texts
        .iter()
        .zip([Label::Harmful, Label::Benign])
        .map(|(cols, label)| {
            let feats: Vec<TextFeatures> = cols.iter().map(|t| TextFeatures::extract(t).unwrap()).collect();
            BdExample {
                features: detectors.iter().map(|d| feats.iter().map(|f| d.space.project(f)).collect()).collect(),
                label,
            }
        })
        .collect();
    let weights: Vec<WeightMatrix> = (0..batch.len())
        .map(|_| {
            WeightMatrix::new(3, 3, (0..9).map(|_| rng.random_range(0.1..1.0)).collect()).unwrap().normalize().unwrap()
        })
        .collect();
    let cw = ClassWeights { benign: 0.8, harmful: 1.3 };
    let (_, grads) = loss_bd_with_weights(&batch, &weights, &detectors, &cw);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for m in 0..detectors.len() {
        for j in 0..=dim {
            let analytic = if j == dim { grads.bias[m] } else { grads.weights[m][j] };
            let eval = |dets: &mut Vec<Detector>, delta: f64| {
                if j == dim { dets[m].params.bias += delta } else { dets[m].params.weights[j] += delta }
                let v = loss_bd_with_weights(&batch, &weights, dets, &cw).0;
                if j == dim { dets[m].params.bias -= delta } else { dets[m].params.weights[j] -= delta }
                v
            };
            let numeric = (eval(&mut detectors, h) - eval(&mut detectors, -h)) / (2.0 * h);
            if analytic == 0.0 && numeric.abs() < 1e-10 {
                continue;
            }
            worst = worst.max(rel_err(analytic, numeric));
            checked += 1;
        }
    }
    (worst, checked)
}

fn assignor_gradient_check() -> (f64, usize) {
    let mut rng = rng_from_seed(506);
    let params = AssignorParams::init(AssignorConfig { embed_dim: 4, hidden_dim: 8 }, 9);
    let batch: Vec<AssignorExample> = (0..2)
        .map(|i| AssignorExample {
            matrix: PredictionMatrix::new(3, 4, (0..12).map(|_| rng.random::<f64>()).collect()).unwrap(),
            label: if i == 0 { Label::Harmful } else { Label::Benign },
            noise_seed: 77 + i,
        })
        .collect();
    let prior = PriorConfig::default();
    let (_, grad) = assignor_gradients(&batch, &params, &prior, 4).unwrap();
    let analytic = grad.flatten();
    let base = params.flatten();
    let h = 1e-5;
    let mut probe = params.clone();
    let mut loss_at = |flat: &[f64]| {
        probe.load_flat(flat);
        assignor_gradients(&batch, &probe, &prior, 4).unwrap().0
    };
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] += h;
        let mut minus = base.clone();
        minus[i] -= h;
        let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
        if analytic[i].abs() < 1e-9 && numeric.abs() < 1e-9 {
            continue;
        }
        worst = worst.max(rel_err(analytic[i], numeric));
        checked += 1;
    }
    (worst, checked)
}

// ------------------------------------------------------------------ ELBO

fn criterion_6() -> Outcome {
    let bench = Bench::new(606);
    let mut detectors: Vec<Detector> = default_spaces(3, FEATURE_DIM).into_iter().map(Detector::new).collect();
    pretrain_only(&mut detectors, &bench, 606);
    let model = EnsembleModel { detectors, assignor: AssignorParams::init(AssignorConfig::default(), 6) };
    let batch: Vec<AssignorExample> = bench.train[..32]
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let set = robust_ensemble::paraphrase::Paraphraser::paraphrase(&bench.generator, &s.text, 4, i as u64).unwrap();
            let feats: Vec<TextFeatures> = set.samples().iter().map(|t| TextFeatures::extract(t).unwrap()).collect();
            AssignorExample { matrix: model.detector_matrix(&feats).unwrap(), label: s.label, noise_seed: i as u64 }
        })
        .collect();
    let prior = PriorConfig::default();
    let mut params = model.assignor.clone();
    let mut adam = Adam::new(AdamConfig::default(), params.parameter_count());
    let mut losses = Vec::new();
    for _ in 0..50 {
        let (loss, grad) = loss_ag(&batch, &params, &prior, 16).unwrap();
        losses.push(loss);
        let mut flat = params.flatten();
        adam.step(&mut flat, &grad.flatten());
        params.load_flat(&flat);
    }
    let blocks: Vec<f64> = losses.chunks(5).map(|c| c.iter().sum::<f64>() / 5.0).collect();
    let monotone = blocks.windows(2).all(|w| w[1] < w[0]);
    Outcome::new(
        monotone,
        format!(
            "-ELBO 5-step means {}",
            blocks.iter().map(|b| format!("{b:.3}")).collect::<Vec<_>>().join(" > ")
        ),
    )
}

// ------------------------------------------------------------ toy bench

const FEATURE_DIM: usize = 1 << 16;
const KNOWN_ATTACKS: [AttackKind; 3] = [AttackKind::Char, AttackKind::Word, AttackKind::Sentence];

struct Bench {
    train: Vec<LabeledText>,
    test: Vec<LabeledText>,
    lexicon: Arc<SynonymLexicon>,
    generator: RuleBasedGenerator,
}

impl Bench {
    fn new(seed: u64) -> Self {
        Self::from_corpus(default_toy_corpus(seed), seed)
    }

    fn sized(size: usize, seed: u64) -> Self {
        Self::from_corpus(toy_corpus(size, 0.4, seed), seed)
    }

    fn from_corpus(data: Vec<LabeledText>, seed: u64) -> Self {
        let split = split_datasets(&data, 0.6, derive_seed(seed, 1)).unwrap();
        let generator = RuleBasedGenerator::bundled();
        Self { train: split.d_bd, test: split.d_ag, lexicon: Arc::new(generator.lexicon().clone()), generator }
    }
}

fn train_config(seed: u64) -> TrainConfig {
    TrainConfig { seed, ..Default::default() }
}

fn pretrain_only(detectors: &mut Vec<Detector>, bench: &Bench, seed: u64) {
    let model = EnsembleModel { detectors: detectors.clone(), assignor: AssignorParams::init(AssignorConfig::default(), seed) };
    let cfg = TrainConfig { alternations: 1, detector_epochs: 0, assignor_epochs: 0, seed, ..Default::default() };
    *detectors = train(bench, model, &[], &cfg).detectors;
}

fn train(bench: &Bench, init: EnsembleModel, attacks: &[AttackKind], cfg: &TrainConfig) -> EnsembleModel {
    let ctx = TrainContext {
        generator: &bench.generator,
        lexicon: &bench.lexicon,
        budget: Default::default(),
        prior: PriorConfig::default(),
        attacks: attacks.to_vec(),
    };
    let out = iat_train(&bench.train, cfg, &ctx, init).unwrap();
    assert!(out.aborted.is_none(), "training aborted: {:?}", out.aborted);
    out.model
}

fn ensemble(detectors: usize, seed: u64) -> EnsembleModel {
    EnsembleModel::init(detectors, FEATURE_DIM, AssignorConfig::default(), seed)
}

fn single(index: usize, seed: u64) -> EnsembleModel {
    let space = default_spaces(5, FEATURE_DIM).swap_remove(index);
    EnsembleModel { detectors: vec![Detector::new(space)], assignor: AssignorParams::init(AssignorConfig::default(), seed) }
}

fn inference(paraphrases: usize, mode: InferenceMode, seed: u64) -> InferenceConfig {
    InferenceConfig { paraphrases, mode, seed, ..Default::default() }
}

/// After-attack report on the test split; attacks rotate over samples.
fn attack_report(bench: &Bench, model: &EnsembleModel, kinds: &[AttackKind], paraphrases: usize, seed: u64) -> MetricsReport {
    let target = Pipeline::new(model, &bench.generator, inference(paraphrases, InferenceMode::Plugin, seed));
    let ctx = AttackContext { lexicon: &bench.lexicon, generator: &bench.generator, budget: Default::default() };
    let per_sample: Vec<AttackKind> = (0..bench.test.len()).map(|i| kinds[i % kinds.len()]).collect();
    let (records, skipped) =
        build_mixed_adversarial_dataset(&bench.test, &target, &per_sample, &ctx, derive_seed(seed, 99)).unwrap();
    after_attack_metrics(&records, &skipped, &target).unwrap()
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let bench = Bench::new(707);
    let model = train(&bench, ensemble(3, 707), &KNOWN_ATTACKS, &train_config(707));
    let ns = [0usize, 2, 4, 8];
    let asr: Vec<f64> = ns.iter().map(|&n| attack_report(&bench, &model, &[AttackKind::Char], n, 707).asr).collect();
    let mut inversions = 0;
    let mut ok = true;
    for w in asr.windows(2) {
        if w[1] > w[0] {
            inversions += 1;
            ok &= w[1] - w[0] <= 2.0;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        ok && inversions <= 1 && secs < 600.0,
        format!(
            "char ASR by N: {}; {inversions} inversion(s)",
            ns.iter().zip(&asr).map(|(n, a)| format!("N={n}: {a:.2}%")).collect::<Vec<_>>().join(", ")
        ),
    )
}

/// Paraphrase-averaging target: uniform mean over every cell of the
/// detector-by-paraphrase matrix.
fn averaging_report(bench: &Bench, detectors: Vec<Detector>, kind: AttackKind, seed: u64) -> f64 {
    let model = EnsembleModel { detectors, assignor: AssignorParams::init(AssignorConfig::default(), seed) };
    let pipe = Pipeline::new(&model, &bench.generator, inference(4, InferenceMode::Plugin, seed));
    let target = FnPredictor(|t: &str| Ok(aggregate_uniform(&pipe.matrix(t)?.0)));
    let ctx = AttackContext { lexicon: &bench.lexicon, generator: &bench.generator, budget: Default::default() };
    let (records, skipped) =
        build_mixed_adversarial_dataset(&bench.test, &target, &vec![kind; bench.test.len()], &ctx, derive_seed(seed, 99))
            .unwrap();
    after_attack_metrics(&records, &skipped, &target).unwrap().asr
}

fn criterion_8() -> Outcome {
    let bench = Bench::sized(2000, 808);
    let cfg = train_config(808);
    let members: Vec<Detector> = default_spaces(5, FEATURE_DIM)
        .into_iter()
        .map(|s| {
            let init = EnsembleModel { detectors: vec![Detector::new(s)], assignor: AssignorParams::init(AssignorConfig::default(), 808) };
            train(&bench, init, &[], &cfg).detectors.remove(0)
        })
        .collect();
    let mut table: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let row = |dets: Vec<Detector>| AttackKind::ALL.iter().map(|&k| averaging_report(&bench, dets.clone(), k, 808)).collect::<Vec<_>>();
    table.insert("M=5".into(), row(members.clone()));
    for (i, d) in members.iter().enumerate() {
        table.insert(format!("single {i}"), row(vec![d.clone()]));
    }
    let ens = &table["M=5"];
    let mut ok = true;
    for (name, row) in &table {
        if name != "M=5" {
            ok &= ens.iter().zip(row).all(|(e, s)| e <= s);
        }
    }
    let detail = table
        .iter()
        .map(|(name, row)| format!("{name} [{}]", row.iter().map(|a| format!("{a:.1}")).collect::<Vec<_>>().join(" ")))
        .collect::<Vec<_>>()
        .join("; ");
    Outcome::new(ok, format!("ASR % (char word sentence multilevel): {detail}"))
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (mean, (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

fn criterion_9() -> Outcome {
    let mut full = Vec::new();
    let mut no_me = Vec::new();
    let mut no_iat = Vec::new();
    for s in 0..5u64 {
        let seed = 900 + s;
        let bench = Bench::new(seed);
        let cfg = train_config(seed);
        let f1 = |m: &EnsembleModel| attack_report(&bench, m, &KNOWN_ATTACKS, 4, seed).f1;
        full.push(f1(&train(&bench, ensemble(5, seed), &KNOWN_ATTACKS, &cfg)));
        no_me.push(f1(&train(&bench, single(0, seed), &KNOWN_ATTACKS, &cfg)));
        no_iat.push(f1(&train(&bench, ensemble(5, seed), &[], &cfg)));
    }
    let (f, fs) = mean_sd(&full);
    let (a, as_) = mean_sd(&no_me);
    let (b, bs) = mean_sd(&no_iat);
    let ok = f - a > fs.max(as_) && f - b > fs.max(bs);
    Outcome::new(
        ok,
        format!("after-attack F1 mean (sd): full {f:.2} ({fs:.2}), w/o ME {a:.2} ({as_:.2}), w/o IAT {b:.2} ({bs:.2})"),
    )
}

fn criterion_10() -> Outcome {
    let bench = Bench::new(1010);
    let model = train(&bench, ensemble(5, 1010), &KNOWN_ATTACKS, &train_config(1010));
    let plugin = Pipeline::new(&model, &bench.generator, inference(4, InferenceMode::Plugin, 1010));
    let mc = Pipeline::new(&model, &bench.generator, inference(4, InferenceMode::Mc, 1010));
    let agree = bench
        .test
        .iter()
        .filter(|s| plugin.verdict(&s.text).unwrap().label == mc.verdict(&s.text).unwrap().label)
        .count();
    let rate = 100.0 * agree as f64 / bench.test.len() as f64;
    Outcome::new(rate >= 95.0, format!("{agree}/{} labels agree ({rate:.1}%)", bench.test.len()))
}

// ----------------------------------------------------------- determinism

fn cli(args: &[&str], dir: &Path) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_robust-ensemble"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn pipeline_run(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::write(
        dir.join("run.json"),
        r#"{"detectors": 3, "feature_dim": 4096, "train": {"alternations": 2}, "attacks": ["char", "word"]}"#,
    )
    .unwrap();
    cli(&["toy", "--out", "toy.jsonl", "--size", "120", "--seed", "11"], dir);
    let mut outputs = BTreeMap::new();
    outputs.insert("train.stdout".into(), cli(&["train", "--config", "run.json", "--data", "toy.jsonl", "--out", "ck", "--seed", "5"], dir));
    outputs.insert(
        "attack.stdout".into(),
        cli(&["attack", "--config", "run.json", "--data", "toy.jsonl", "--checkpoint", "ck", "--out", "att", "--attack", "all", "--seed", "5"], dir),
    );
    outputs.insert(
        "eval.stdout".into(),
        cli(&["eval", "--config", "run.json", "--data", "att/adversarial_word.jsonl", "--checkpoint", "ck", "--out", "ev", "--seed", "5"], dir),
    );
    for sub in ["ck", "att", "ev"] {
        for entry in std::fs::read_dir(dir.join(sub)).unwrap() {
            let path = entry.unwrap().path();
            outputs.insert(format!("{sub}/{}", path.file_name().unwrap().to_string_lossy()), std::fs::read(&path).unwrap());
        }
    }
    outputs
}

fn criterion_11() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = pipeline_run(a.path());
    let second = pipeline_run(b.path());
    let differing: Vec<&String> = first.keys().filter(|k| first.get(*k) != second.get(*k)).collect();
    let ok = differing.is_empty() && first.len() == second.len();
    Outcome::new(
        ok,
        if ok {
            format!("{} artifacts byte-identical across two train+attack+eval runs", first.len())
        } else {
            format!("differing artifacts: {differing:?}")
        },
    )
}

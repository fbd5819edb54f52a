//! Iterative adversarial training.
//!
//! The labeled data is split into a detector part and an assignor part.
//! Each alternation re-crafts adversarial versions of both parts against the
//! current full pipeline, caches paraphrases, then runs a detector phase
//! (assignor frozen) followed by an assignor phase (detectors frozen).

mod adam;
mod losses;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignor::{AssignorExample, AssignorParams};
use crate::attack::{build_mixed_adversarial_dataset, AttackBudget, AttackContext, AttackKind};
use crate::corpus::LabeledText;
use crate::detector::{cost_sensitive_ce, cost_sensitive_ce_grad, predict_proba, ClassWeights, Detector, TextFeatures};
use crate::error::Error;
use crate::matrix::Label;
use crate::model::{EnsembleModel, InferenceConfig, InferenceMode, Pipeline};
use crate::paraphrase::{Paraphraser, SynonymLexicon};
use crate::prior::PriorConfig;
use crate::rng::{checksum_f64, derive_seed, derive_seed_str, rng_from_seed};
use crate::Result;

pub use adam::{Adam, AdamConfig};
pub use losses::{assignor_weights, loss_ag, loss_bd, loss_bd_with_weights, BdExample, DetectorGradients};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("need at least 2 samples to split, got {count}")]
    TooFewSamples { count: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training diverged: {0}")]
    Diverged(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    /// Clean detector epochs on the detector split before the first
    /// alternation.
    pub pretrain_epochs: usize,
    pub detector_epochs: usize,
    pub assignor_epochs: usize,
    pub alternations: usize,
    pub batch_size: usize,
    /// ELBO samples per example (`K`).
    pub elbo_samples: usize,
    /// Paraphrases per training example (`N`).
    pub paraphrases: usize,
    /// Share of the data given to the detector split.
    pub split_ratio: f64,
    /// Relative loss change under which both phases count as converged.
    pub tolerance: f64,
    /// Train only the assignor.
    pub fixed_detectors: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            pretrain_epochs: 5,
            detector_epochs: 3,
            assignor_epochs: 3,
            alternations: 10,
            batch_size: 32,
            elbo_samples: 16,
            paraphrases: 4,
            split_ratio: 0.5,
            tolerance: 1e-4,
            fixed_detectors: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        let a = &self.adam;
        if !(a.learning_rate > 0.0 && a.epsilon > 0.0) {
            return bad("learning rate and Adam epsilon must be positive");
        }
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2)) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if self.batch_size == 0 || self.elbo_samples == 0 {
            return bad("batch_size and elbo_samples must be positive");
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad("split_ratio must lie in (0, 1)");
        }
        if !(self.tolerance >= 0.0) {
            return bad("tolerance must be non-negative");
        }
        Ok(())
    }
}

/// Disjoint detector and assignor splits plus their adversarial
/// augmentations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplitDatasets {
    pub d_bd: Vec<LabeledText>,
    pub d_ag: Vec<LabeledText>,
    pub d_bd_adv: Vec<LabeledText>,
    pub d_ag_adv: Vec<LabeledText>,
}

/// Stratified split: each label is shuffled and divided so that the
/// detector split gets `round(ratio * |D|)` samples in total, clamped so that
/// neither split is empty.
pub fn split_datasets(data: &[LabeledText], ratio: f64, seed: u64) -> Result<SplitDatasets, TrainError> {
    if data.len() < 2 {
        return Err(TrainError::TooFewSamples { count: data.len() });
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(TrainError::InvalidConfig(format!("split ratio must lie in (0, 1), got {ratio}")));
    }
    let mut rng = rng_from_seed(seed);
    let mut by_label: [Vec<&LabeledText>; 2] = [Vec::new(), Vec::new()];
    for d in data {
        by_label[d.label.as_u8() as usize].push(d);
    }
    let target = ((ratio * data.len() as f64).round() as usize).clamp(1, data.len() - 1);
    let exact: Vec<f64> = by_label.iter().map(|g| ratio * g.len() as f64).collect();
    let mut take: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order = [0usize, 1];
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let mut i = 0;
    while take.iter().sum::<usize>() < target {
        let c = order[i % 2];
        if take[c] < by_label[c].len() {
            take[c] += 1;
        }
        i += 1;
    }
    while take.iter().sum::<usize>() > target {
        let c = order[1 - i % 2];
        if take[c] > 0 {
            take[c] -= 1;
        }
        i += 1;
    }
    let mut out = SplitDatasets::default();
    for (group, &k) in by_label.iter_mut().zip(&take) {
        group.shuffle(&mut rng);
        out.d_bd.extend(group[..k].iter().map(|d| (*d).clone()));
        out.d_ag.extend(group[k..].iter().map(|d| (*d).clone()));
    }
    let by_id = |a: &LabeledText, b: &LabeledText| a.id.cmp(&b.id);
    out.d_bd.sort_by(by_id);
    out.d_ag.sort_by(by_id);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pretrain,
    Bd,
    Ag,
}

/// One training-log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub phase: Phase,
    pub alternation: usize,
    /// Optimizer steps taken in this phase.
    pub step: usize,
    /// Mean per-example loss over the last epoch of the phase.
    pub loss: f64,
    /// Per-step batch losses (sums over the batch).
    pub step_losses: Vec<f64>,
    /// Logical clock: index of this entry.
    pub timestamp: u64,
    /// Seed that drove shuffling and noise in this phase.
    pub seed: u64,
    /// Ids of every example used in this phase (clean and adversarial).
    pub sample_ids: Vec<String>,
    pub adversarial_examples: usize,
    /// Checksums of the frozen component before and after the phase.
    pub frozen_checksum_before: u64,
    pub frozen_checksum_after: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub attack_target: String,
    pub attacks: Vec<AttackKind>,
    pub detectors: usize,
    pub bd_samples: usize,
    pub ag_samples: usize,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub header: LogHeader,
    pub entries: Vec<LogEntry>,
}

impl TrainLog {
    /// Header line followed by one line per entry.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&serde_json::json!({ "header": self.header })).expect("serializable");
        out.push('\n');
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("serializable"));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: EnsembleModel,
    pub log: TrainLog,
    pub splits: SplitDatasets,
    /// Set when training stopped on a non-finite value; `model` is then the
    /// last state with finite parameters.
    pub aborted: Option<String>,
}

/// Everything besides data and config that training needs.
pub struct TrainContext<'a> {
    pub generator: &'a dyn Paraphraser,
    pub lexicon: &'a SynonymLexicon,
    pub budget: AttackBudget,
    pub prior: PriorConfig,
    /// Attacks used to craft the augmentations, assigned round-robin over
    /// samples. Empty disables augmentation.
    pub attacks: Vec<AttackKind>,
}

struct Prepared {
    id: String,
    label: Label,
    columns: Vec<TextFeatures>,
}

fn prepare(
    samples: &[LabeledText],
    generator: &dyn Paraphraser,
    n: usize,
    seed: u64,
) -> Result<Vec<Prepared>> {
    samples
        .iter()
        .map(|s| {
            let set = generator.paraphrase(&s.text, n, derive_seed_str(seed, &s.id))?;
            let columns = set.samples().iter().map(|t| TextFeatures::extract(t)).collect::<Result<Vec<_>, _>>()?;
            Ok(Prepared { id: s.id.clone(), label: s.label, columns })
        })
        .collect()
}

fn bd_example(p: &Prepared, detectors: &[Detector]) -> BdExample {
    BdExample {
        features: detectors.iter().map(|d| p.columns.iter().map(|c| d.space.project(c)).collect()).collect(),
        label: p.label,
    }
}

fn detector_checksum(detectors: &[Detector]) -> u64 {
    let mut all = Vec::new();
    for d in detectors {
        all.extend_from_slice(&d.params.weights);
        all.push(d.params.bias);
    }
    checksum_f64(&all)
}

fn assignor_checksum(a: &AssignorParams) -> u64 {
    checksum_f64(&a.flatten())
}

struct DetectorOptimizers {
    weights: Vec<Adam>,
    bias: Vec<Adam>,
}

impl DetectorOptimizers {
    fn new(cfg: AdamConfig, detectors: &[Detector]) -> Self {
        Self {
            weights: detectors.iter().map(|d| Adam::new(cfg, d.params.weights.len())).collect(),
            bias: detectors.iter().map(|_| Adam::new(cfg, 1)).collect(),
        }
    }

    fn step(&mut self, detectors: &mut [Detector], grads: &DetectorGradients) {
        for (m, d) in detectors.iter_mut().enumerate() {
            self.weights[m].step(&mut d.params.weights, &grads.weights[m]);
            let mut b = [d.params.bias];
            self.bias[m].step(&mut b, &[grads.bias[m]]);
            d.params.bias = b[0];
        }
    }
}

fn shuffled(len: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(&mut rng_from_seed(seed));
    idx
}

fn relative_change(prev: f64, cur: f64) -> f64 {
    (prev - cur).abs() / prev.abs().max(f64::MIN_POSITIVE)
}

/// Runs iterative adversarial training from `init`.
pub fn iat_train(
    data: &[LabeledText],
    config: &TrainConfig,
    ctx: &TrainContext<'_>,
    init: EnsembleModel,
) -> Result<TrainOutput> {
    config.validate()?;
    ctx.budget.validate()?;
    ctx.prior.validate()?;
    let mut splits = split_datasets(data, config.split_ratio, derive_seed_str(config.seed, "split"))?;
    let header = LogHeader {
        attack_target: "full pipeline (paraphrase, detectors, assignor) in plugin mode; \
                        detector-only attacks are the alternative"
            .to_string(),
        attacks: ctx.attacks.clone(),
        detectors: init.detectors.len(),
        bd_samples: splits.d_bd.len(),
        ag_samples: splits.d_ag.len(),
        config: config.clone(),
    };
    let mut log = TrainLog { header, entries: Vec::new() };
    let mut model = init;
    if config.alternations == 0 {
        return Ok(TrainOutput { model, log, splits, aborted: None });
    }

    let cw = ClassWeights::inverse_frequency(splits.d_bd.iter().map(|d| d.label));
    let mut det_opt = DetectorOptimizers::new(config.adam, &model.detectors);
    let mut ag_opt = Adam::new(config.adam, model.assignor.parameter_count());
    let mut clock = 0u64;
    let mut next_clock = || {
        clock += 1;
        clock - 1
    };

    if !config.fixed_detectors && config.pretrain_epochs > 0 {
        let seed = derive_seed_str(config.seed, "pretrain");
        let mut pre_opt = DetectorOptimizers::new(config.adam, &model.detectors);
        let entry = pretrain(&mut model.detectors, &splits.d_bd, &cw, config, &mut pre_opt, seed, next_clock())?;
        log.entries.push(entry);
    }

    let mut prev: Option<(f64, f64)> = None;
    for alt in 0..config.alternations {
        let alt_seed = derive_seed(derive_seed_str(config.seed, "alternation"), alt as u64);
        if !ctx.attacks.is_empty() {
            let (bd_adv, ag_adv) = craft(&model, &splits, config, ctx, alt, alt_seed)?;
            splits.d_bd_adv = bd_adv;
            splits.d_ag_adv = ag_adv;
        }
        let para_seed = derive_seed(alt_seed, 1);
        let bd_set: Vec<LabeledText> = splits.d_bd.iter().chain(&splits.d_bd_adv).cloned().collect();
        let ag_set: Vec<LabeledText> = splits.d_ag.iter().chain(&splits.d_ag_adv).cloned().collect();

        let mut bd_loss = 0.0;
        if !config.fixed_detectors {
            let prepared = prepare(&bd_set, ctx.generator, config.paraphrases, para_seed)?;
            let examples: Vec<BdExample> = prepared.iter().map(|p| bd_example(p, &model.detectors)).collect();
            let before = assignor_checksum(&model.assignor);
            let snapshot = model.detectors.clone();
            let phase_seed = derive_seed(alt_seed, 2);
            let mut step_losses = Vec::new();
            let mut last_epoch = 0.0;
            for epoch in 0..config.detector_epochs {
                let order = shuffled(examples.len(), derive_seed(phase_seed, epoch as u64));
                let mut epoch_loss = 0.0;
                for chunk in order.chunks(config.batch_size) {
                    let batch: Vec<BdExample> = chunk.iter().map(|&i| examples[i].clone()).collect();
                    let (loss, grads) = match loss_bd(&batch, &model.detectors, &model.assignor, &ctx.prior, &cw) {
                        Ok(v) => v,
                        Err(e) => return abort(snapshot, model.assignor, log, splits, e),
                    };
                    det_opt.step(&mut model.detectors, &grads);
                    if !loss.is_finite() || model.detectors.iter().any(|d| !d.params.is_finite()) {
                        let reason = Error::Train(TrainError::Diverged("non-finite detector update".into()));
                        return abort(snapshot, model.assignor, log, splits, reason);
                    }
                    step_losses.push(loss);
                    epoch_loss += loss;
                }
                last_epoch = epoch_loss / examples.len().max(1) as f64;
            }
            bd_loss = last_epoch;
            log.entries.push(LogEntry {
                phase: Phase::Bd,
                alternation: alt,
                step: step_losses.len(),
                loss: last_epoch,
                step_losses,
                timestamp: next_clock(),
                seed: phase_seed,
                sample_ids: prepared.iter().map(|p| p.id.clone()).collect(),
                adversarial_examples: splits.d_bd_adv.len(),
                frozen_checksum_before: before,
                frozen_checksum_after: assignor_checksum(&model.assignor),
            });
        }

        let prepared = prepare(&ag_set, ctx.generator, config.paraphrases, para_seed)?;
        let matrices = prepared
            .iter()
            .map(|p| model.detector_matrix(&p.columns))
            .collect::<Result<Vec<_>>>()?;
        let before = detector_checksum(&model.detectors);
        let snapshot = model.assignor.clone();
        let phase_seed = derive_seed(alt_seed, 3);
        let mut step_losses = Vec::new();
        let mut last_epoch = 0.0;
        for epoch in 0..config.assignor_epochs {
            let epoch_seed = derive_seed(phase_seed, epoch as u64);
            let order = shuffled(matrices.len(), epoch_seed);
            let mut epoch_loss = 0.0;
            for chunk in order.chunks(config.batch_size) {
                let batch: Vec<AssignorExample> = chunk
                    .iter()
                    .map(|&i| AssignorExample {
                        matrix: matrices[i].clone(),
                        label: prepared[i].label,
                        noise_seed: derive_seed_str(epoch_seed, &prepared[i].id),
                    })
                    .collect();
                let (loss, grads) = match loss_ag(&batch, &model.assignor, &ctx.prior, config.elbo_samples) {
                    Ok(v) => v,
                    Err(e) => return abort(model.detectors, snapshot, log, splits, e),
                };
                let mut flat = model.assignor.flatten();
                ag_opt.step(&mut flat, &grads.flatten());
                model.assignor.load_flat(&flat);
                if !loss.is_finite() || !model.assignor.is_finite() {
                    let reason = Error::Train(TrainError::Diverged("non-finite assignor update".into()));
                    return abort(model.detectors, snapshot, log, splits, reason);
                }
                step_losses.push(loss);
                epoch_loss += loss;
            }
            last_epoch = epoch_loss / matrices.len().max(1) as f64;
        }
        let ag_loss = last_epoch;
        log.entries.push(LogEntry {
            phase: Phase::Ag,
            alternation: alt,
            step: step_losses.len(),
            loss: last_epoch,
            step_losses,
            timestamp: next_clock(),
            seed: phase_seed,
            sample_ids: prepared.iter().map(|p| p.id.clone()).collect(),
            adversarial_examples: splits.d_ag_adv.len(),
            frozen_checksum_before: before,
            frozen_checksum_after: detector_checksum(&model.detectors),
        });
        log::info!("alternation {alt}: bd loss {bd_loss:.6}, ag loss {ag_loss:.6}");

        if let Some((pb, pa)) = prev {
            let bd_done = config.fixed_detectors || relative_change(pb, bd_loss) < config.tolerance;
            if bd_done && relative_change(pa, ag_loss) < config.tolerance {
                log::info!("converged after {} alternations", alt + 1);
                break;
            }
        }
        prev = Some((bd_loss, ag_loss));
    }
    Ok(TrainOutput { model, log, splits, aborted: None })
}

fn abort(
    detectors: Vec<Detector>,
    assignor: AssignorParams,
    log: TrainLog,
    splits: SplitDatasets,
    reason: Error,
) -> Result<TrainOutput> {
    log::warn!("training aborted: {reason}");
    Ok(TrainOutput { model: EnsembleModel { detectors, assignor }, log, splits, aborted: Some(reason.to_string()) })
}

/// Each detector fits the clean detector split on its own, column 0 only.
fn pretrain(
    detectors: &mut [Detector],
    data: &[LabeledText],
    cw: &ClassWeights,
    config: &TrainConfig,
    opt: &mut DetectorOptimizers,
    seed: u64,
    timestamp: u64,
) -> Result<LogEntry> {
    let features = data.iter().map(|d| TextFeatures::extract(&d.text)).collect::<Result<Vec<_>, _>>()?;
    let projected: Vec<Vec<_>> = detectors.iter().map(|d| features.iter().map(|f| d.space.project(f)).collect()).collect();
    let mut step_losses = Vec::new();
    let mut last_epoch = 0.0;
    for epoch in 0..config.pretrain_epochs {
        let order = shuffled(data.len(), derive_seed(seed, epoch as u64));
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let mut grads = DetectorGradients::zeros(detectors);
            let mut loss = 0.0;
            for (m, d) in detectors.iter().enumerate() {
                for &i in chunk {
                    let x = &projected[m][i];
                    let p = predict_proba(&d.params, x);
                    loss += cost_sensitive_ce(p, data[i].label, cw) / detectors.len() as f64;
                    let g = cost_sensitive_ce_grad(p, data[i].label, cw) * p * (1.0 - p);
                    grads.bias[m] += g;
                    for &(j, c) in x.entries() {
                        grads.weights[m][j as usize] += g * c;
                    }
                }
            }
            opt.step(detectors, &grads);
            step_losses.push(loss);
            epoch_loss += loss;
        }
        last_epoch = epoch_loss / data.len().max(1) as f64;
    }
    Ok(LogEntry {
        phase: Phase::Pretrain,
        alternation: 0,
        step: step_losses.len(),
        loss: last_epoch,
        step_losses,
        timestamp,
        seed,
        sample_ids: data.iter().map(|d| d.id.clone()).collect(),
        adversarial_examples: 0,
        frozen_checksum_before: 0,
        frozen_checksum_after: 0,
    })
}

/// Attacks both splits against the current pipeline; attacks rotate over
/// samples and alternations.
fn craft(
    model: &EnsembleModel,
    splits: &SplitDatasets,
    config: &TrainConfig,
    ctx: &TrainContext<'_>,
    alt: usize,
    seed: u64,
) -> Result<(Vec<LabeledText>, Vec<LabeledText>)> {
    let inference = InferenceConfig {
        paraphrases: config.paraphrases,
        mode: InferenceMode::Plugin,
        prior: ctx.prior,
        seed: derive_seed(seed, 4),
        ..Default::default()
    };
    let target = Pipeline::new(model, ctx.generator, inference);
    let actx = AttackContext { lexicon: ctx.lexicon, generator: ctx.generator, budget: ctx.budget };
    let run = |part: &[LabeledText], tag: u64| -> Result<Vec<LabeledText>> {
        let kinds: Vec<AttackKind> = (0..part.len()).map(|i| ctx.attacks[(i + alt) % ctx.attacks.len()]).collect();
        let (records, _) = build_mixed_adversarial_dataset(part, &target, &kinds, &actx, derive_seed(seed, tag))?;
        Ok(records
            .into_iter()
            .filter(|r| r.adversarial != r.clean)
            .map(|r| LabeledText::new(format!("{}#adv{alt}", r.id), r.adversarial, r.label))
            .collect())
    };
    let bd = run(&splits.d_bd, 5)?;
    let ag = run(&splits.d_ag, 6)?;
    Ok((bd, ag))
}

/// Ids seen by each phase, with adversarial suffixes stripped.
pub fn phase_ids(log: &TrainLog, phase: Phase) -> BTreeSet<String> {
    log.entries
        .iter()
        .filter(|e| e.phase == phase)
        .flat_map(|e| e.sample_ids.iter().map(|id| id.split('#').next().unwrap_or(id).to_string()))
        .collect()
}

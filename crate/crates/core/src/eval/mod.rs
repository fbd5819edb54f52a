//! Robustness metrics and bound verification.

mod bounds;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attack::{AdversarialRecord, Predictor};
use crate::corpus::LabeledText;
use crate::matrix::{classify, Label};
use crate::Result;

pub use bounds::{
    ensemble_bound, single_bound, verify_all, verify_ensemble_bound, verify_single_bound, BoundCheck, BoundScenario,
    DrawFamily,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no adversarial records")]
    EmptyRecordSet,
    #[error("detector {detector}: no distribution on [0, 1] has mean {mean} and variance {variance}")]
    InfeasibleMoments { detector: usize, mean: f64, variance: f64 },
    #[error("mean probability equals the threshold; the bound needs a positive margin")]
    ZeroMargin,
    #[error("mean probability {mean} lies on the wrong side of the threshold {epsilon} for the scenario label")]
    WrongSide { mean: f64, epsilon: f64 },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

impl EvalError {
    pub fn is_validation(&self) -> bool {
        true
    }
}

/// Attack success rate in percent.
pub fn asr(records: &[AdversarialRecord]) -> Result<f64, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyRecordSet);
    }
    Ok(100.0 * records.iter().filter(|r| r.succeeded).count() as f64 / records.len() as f64)
}

/// Confusion counts with class 1 (harmful) as positive.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn add(&mut self, truth: Label, predicted: Label) {
        match (truth, predicted) {
            (Label::Harmful, Label::Harmful) => self.tp += 1,
            (Label::Benign, Label::Harmful) => self.fp += 1,
            (Label::Benign, Label::Benign) => self.tn += 1,
            (Label::Harmful, Label::Benign) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    fn ratio(num: usize, den: usize) -> f64 {
        if den == 0 {
            0.0
        } else {
            100.0 * num as f64 / den as f64
        }
    }

    pub fn accuracy(&self) -> f64 {
        Self::ratio(self.tp + self.tn, self.total())
    }

    pub fn precision(&self) -> f64 {
        Self::ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        Self::ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

/// Percentages plus the counts they derive from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub asr: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub crafted: usize,
    pub fooled: usize,
    pub misclassified: usize,
    pub confusion: Confusion,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "asr,accuracy,precision,recall,f1,crafted,fooled,misclassified,tp,fp,tn,fn";

    pub fn from_confusion(confusion: Confusion, crafted: usize, fooled: usize, misclassified: usize) -> Self {
        Self {
            asr: if crafted == 0 { 0.0 } else { 100.0 * fooled as f64 / crafted as f64 },
            accuracy: confusion.accuracy(),
            precision: confusion.precision(),
            recall: confusion.recall(),
            f1: confusion.f1(),
            crafted,
            fooled,
            misclassified,
            confusion,
        }
    }

    pub fn csv_row(&self) -> String {
        let c = &self.confusion;
        format!(
            "{:.4},{:.4},{:.4},{:.4},{:.4},{},{},{},{},{},{},{}",
            self.asr, self.accuracy, self.precision, self.recall, self.f1, self.crafted, self.fooled,
            self.misclassified, c.tp, c.fp, c.tn, c.fn_
        )
    }
}

/// Metrics on the after-attack set: every crafted record's adversarial text
/// as judged by `target`, plus the initially misclassified cleans, which
/// count as errors.
pub fn after_attack_metrics(
    records: &[AdversarialRecord],
    skipped: &[LabeledText],
    target: &dyn Predictor,
) -> Result<MetricsReport> {
    let decision = target.decision();
    let mut confusion = Confusion::default();
    let mut fooled = 0;
    for r in records {
        let predicted = classify(target.predict(&r.adversarial)?, decision);
        if predicted != r.label {
            fooled += 1;
        }
        confusion.add(r.label, predicted);
    }
    for s in skipped {
        confusion.add(s.label, s.label.flipped());
    }
    Ok(MetricsReport::from_confusion(confusion, records.len(), fooled, skipped.len()))
}

/// Same as [`after_attack_metrics`] but trusting the `succeeded` flags of
/// the records instead of re-querying a target.
pub fn metrics_from_records(records: &[AdversarialRecord], skipped: &[LabeledText]) -> MetricsReport {
    let mut confusion = Confusion::default();
    for r in records {
        confusion.add(r.label, if r.succeeded { r.label.flipped() } else { r.label });
    }
    for s in skipped {
        confusion.add(s.label, s.label.flipped());
    }
    let fooled = records.iter().filter(|r| r.succeeded).count();
    MetricsReport::from_confusion(confusion, records.len(), fooled, skipped.len())
}

/// Metrics of `target` on clean labeled texts.
pub fn clean_metrics(data: &[LabeledText], target: &dyn Predictor) -> Result<MetricsReport> {
    let decision = target.decision();
    let mut confusion = Confusion::default();
    for s in data {
        confusion.add(s.label, classify(target.predict(&s.text)?, decision));
    }
    let wrong = confusion.fp + confusion.fn_;
    Ok(MetricsReport::from_confusion(confusion, 0, 0, wrong))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::{AttackKind, FnPredictor};

    fn record(id: usize, label: Label, succeeded: bool) -> AdversarialRecord {
        AdversarialRecord {
            id: format!("r{id}"),
            clean: "clean".into(),
            label,
            adversarial: if succeeded { "fooled".into() } else { "held".into() },
            succeeded,
            attack: AttackKind::Char,
            queries_used: 1,
            probability: 0.5,
        }
    }

    #[test]
    fn asr_examples() {
        let recs: Vec<_> = (0..10).map(|i| record(i, Label::Harmful, i < 3)).collect();
        assert_eq!(asr(&recs).unwrap(), 30.0);
        let all: Vec<_> = (0..4).map(|i| record(i, Label::Benign, true)).collect();
        assert_eq!(asr(&all).unwrap(), 100.0);
        let none: Vec<_> = (0..4).map(|i| record(i, Label::Benign, false)).collect();
        assert_eq!(asr(&none).unwrap(), 0.0);
        assert_eq!(asr(&[]), Err(EvalError::EmptyRecordSet));
    }

    #[test]
    fn after_attack_accuracy_example() {
        // 100 cleans: 10 misclassified, 90 crafted, 30 fool the target
        let recs: Vec<_> = (0..90).map(|i| record(i, if i % 2 == 0 { Label::Harmful } else { Label::Benign }, i < 30)).collect();
        let skipped: Vec<_> = (0..10).map(|i| LabeledText::new(format!("s{i}"), "x", Label::Harmful)).collect();
        // the target agrees with the flags: "fooled" texts get the wrong label
        let target = FnPredictor(|t: &str| Ok(if t == "fooled" { 0.5 } else { 0.9 }));
        let recs: Vec<_> = recs
            .into_iter()
            .map(|mut r| {
                if r.label == Label::Benign {
                    r.adversarial = if r.succeeded { "held".into() } else { "fooled".into() };
                }
                r
            })
            .collect();
        let report = after_attack_metrics(&recs, &skipped, &target).unwrap();
        assert_eq!(report.accuracy, 60.0);
        assert_eq!(report.fooled, 30);
        assert_eq!(report.asr, 100.0 * 30.0 / 90.0);
        assert_eq!(report, metrics_from_records(&recs, &skipped));
    }

    #[test]
    fn perfect_target() {
        let recs: Vec<_> = (0..6).map(|i| record(i, if i < 3 { Label::Harmful } else { Label::Benign }, false)).collect();
        let r = metrics_from_records(&recs, &[]);
        assert_eq!((r.accuracy, r.asr, r.f1), (100.0, 0.0, 100.0));
    }

    #[test]
    fn confusion_matches_naive_recount() {
        let pairs = [(1, 1), (1, 0), (0, 1), (0, 0), (1, 1), (0, 0), (0, 0), (1, 0), (1, 1)];
        let mut c = Confusion::default();
        for (t, p) in pairs {
            c.add(Label::from_u8(t).unwrap(), Label::from_u8(p).unwrap());
        }
        let tp = pairs.iter().filter(|&&(t, p)| t == 1 && p == 1).count() as f64;
        let pp = pairs.iter().filter(|&&(_, p)| p == 1).count() as f64;
        let ap = pairs.iter().filter(|&&(t, _)| t == 1).count() as f64;
        let correct = pairs.iter().filter(|&&(t, p)| t == p).count() as f64;
        assert_eq!(c.accuracy(), 100.0 * correct / 9.0);
        assert_eq!(c.precision(), 100.0 * tp / pp);
        assert_eq!(c.recall(), 100.0 * tp / ap);
        let (p, r) = (tp / pp, tp / ap);
        assert!((c.f1() - 100.0 * 2.0 * p * r / (p + r)).abs() < 1e-12);
    }
}

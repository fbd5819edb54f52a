use crate::assignor::{assignor_gradients, infer_posterior, AssignorExample, AssignorParams};
use crate::detector::{cost_sensitive_ce, cost_sensitive_ce_grad, predict_proba, ClassWeights, Detector, FeatureVector};
use crate::matrix::{Label, PredictionMatrix, WeightMatrix};
use crate::prior::PriorConfig;
use crate::Result;

/// One detector-phase example: the features of every column as seen by
/// every detector (`features[m][n]`).
#[derive(Debug, Clone)]
pub struct BdExample {
    pub features: Vec<Vec<FeatureVector>>,
    pub label: Label,
}

impl BdExample {
    pub fn matrix(&self, detectors: &[Detector]) -> PredictionMatrix {
        let rows: Vec<Vec<f64>> = detectors
            .iter()
            .zip(&self.features)
            .map(|(d, cols)| cols.iter().map(|x| predict_proba(&d.params, x)).collect())
            .collect();
        PredictionMatrix::from_rows(&rows).expect("sigmoid outputs form a full matrix")
    }
}

/// Dense gradients for every detector.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorGradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl DetectorGradients {
    pub fn zeros(detectors: &[Detector]) -> Self {
        Self {
            weights: detectors.iter().map(|d| vec![0.0; d.params.weights.len()]).collect(),
            bias: vec![0.0; detectors.len()],
        }
    }
}

/// Summed cost-sensitive cross-entropy of the weighted aggregates and its
/// gradient with respect to every detector, with the weights held fixed.
pub fn loss_bd_with_weights(
    batch: &[BdExample],
    weights: &[WeightMatrix],
    detectors: &[Detector],
    cw: &ClassWeights,
) -> (f64, DetectorGradients) {
    assert_eq!(batch.len(), weights.len());
    let mut grads = DetectorGradients::zeros(detectors);
    let mut loss = 0.0;
    for (ex, w) in batch.iter().zip(weights) {
        let p = ex.matrix(detectors);
        let p_bar: f64 = p.as_slice().iter().zip(w.as_slice()).map(|(a, b)| a * b).sum::<f64>().clamp(0.0, 1.0);
        loss += cost_sensitive_ce(p_bar, ex.label, cw);
        let dl = cost_sensitive_ce_grad(p_bar, ex.label, cw);
        if dl == 0.0 {
            continue;
        }
        for (m, cols) in ex.features.iter().enumerate() {
            for (n, x) in cols.iter().enumerate() {
                let pv = p.get(m, n);
                let g = dl * w.get(m, n) * pv * (1.0 - pv);
                grads.bias[m] += g;
                let gw = &mut grads.weights[m];
                for &(i, c) in x.entries() {
                    gw[i as usize] += g * c;
                }
            }
        }
    }
    (loss, grads)
}

/// Expected normalized weights the assignor gives each example's matrix.
pub fn assignor_weights(
    batch: &[BdExample],
    detectors: &[Detector],
    assignor: &AssignorParams,
    prior: &PriorConfig,
) -> Result<Vec<WeightMatrix>> {
    batch
        .iter()
        .map(|ex| Ok(infer_posterior(&ex.matrix(detectors), assignor, prior.variance())?.expected_weights()))
        .collect()
}

/// Detector-phase loss: weights come from the frozen assignor's expected
/// output and receive no gradient.
pub fn loss_bd(
    batch: &[BdExample],
    detectors: &[Detector],
    assignor: &AssignorParams,
    prior: &PriorConfig,
    cw: &ClassWeights,
) -> Result<(f64, DetectorGradients)> {
    let weights = assignor_weights(batch, detectors, assignor, prior)?;
    Ok(loss_bd_with_weights(batch, &weights, detectors, cw))
}

/// Assignor-phase loss `-sum ELBO` and its gradient; detectors only enter
/// through the precomputed matrices.
pub fn loss_ag(
    batch: &[AssignorExample],
    assignor: &AssignorParams,
    prior: &PriorConfig,
    k: usize,
) -> Result<(f64, AssignorParams)> {
    Ok(assignor_gradients(batch, assignor, prior, k)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{FeatureSpace, TextFeatures};

    #[test]
    fn degenerate_shape_is_plain_cross_entropy() {
        let space = FeatureSpace { dim: 64, ..Default::default() };
        let mut det = Detector::new(space);
        det.params.bias = 0.3;
        det.params.weights[5] = 1.1;
        let x = space.project(&TextFeatures::extract("a short text").unwrap());
        let ex = BdExample { features: vec![vec![x.clone()]], label: Label::Harmful };
        let w = WeightMatrix::uniform(1, 1).unwrap();
        let cw = ClassWeights::default();
        let (loss, _) = loss_bd_with_weights(&[ex], &[w], std::slice::from_ref(&det), &cw);
        assert_eq!(loss, cost_sensitive_ce(predict_proba(&det.params, &x), Label::Harmful, &cw));
    }
}

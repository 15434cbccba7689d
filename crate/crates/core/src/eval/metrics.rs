use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::FinetunedModel;
use crate::paired::PairedDataset;

const INFERENCE_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    /// Unweighted mean of per-class F1; classes without support count as 0.
    pub macro_f1: f64,
    pub per_class: Vec<ClassScores>,
    pub n_test: usize,
    pub seed: u64,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

pub fn metrics_from_predictions(
    predicted: &[usize],
    actual: &[usize],
    class_count: usize,
) -> Result<MetricsReport> {
    if predicted.len() != actual.len() || actual.is_empty() {
        return Err(Error::Input(format!(
            "need equal nonempty prediction and label lists, got {} and {}",
            predicted.len(),
            actual.len()
        )));
    }
    if let Some(c) = predicted.iter().chain(actual).find(|&&c| c >= class_count) {
        return Err(Error::Input(format!("class {c} outside [0, {class_count})")));
    }
    let mut tp = vec![0usize; class_count];
    let mut pred_count = vec![0usize; class_count];
    let mut support = vec![0usize; class_count];
    for (&p, &a) in predicted.iter().zip(actual) {
        pred_count[p] += 1;
        support[a] += 1;
        if p == a {
            tp[p] += 1;
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let per_class: Vec<ClassScores> = (0..class_count)
        .map(|c| {
            let precision = ratio(tp[c], pred_count[c]);
            let recall = ratio(tp[c], support[c]);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassScores {
                precision,
                recall,
                f1,
            }
        })
        .collect();
    let correct: usize = tp.iter().sum();
    Ok(MetricsReport {
        accuracy: correct as f64 / actual.len() as f64,
        macro_f1: per_class.iter().map(|s| s.f1).sum::<f64>() / class_count as f64,
        per_class,
        n_test: actual.len(),
        seed: 0,
    })
}

/// Predicted class for every window of `modality_id` in `ds`.
pub fn predict(model: &FinetunedModel, ds: &PairedDataset, modality_id: &str) -> Result<Vec<usize>> {
    let m = ds.modality_index(modality_id)?;
    let all: Vec<usize> = (0..ds.len()).collect();
    let mut out = Vec::with_capacity(ds.len());
    for chunk in all.chunks(INFERENCE_CHUNK) {
        let probs = model.predict_proba(&ds.batch(m, chunk))?;
        out.extend((0..chunk.len()).map(|i| argmax(probs.row(i))));
    }
    Ok(out)
}

/// Accuracy and macro F1 of `model` on the labeled windows of `test`.
pub fn evaluate(model: &FinetunedModel, test: &PairedDataset, modality_id: &str) -> Result<MetricsReport> {
    test.modality_index(modality_id)?;
    if model.class_count() != test.class_count {
        return Err(Error::Input(format!(
            "model predicts {} classes, test set has {}",
            model.class_count(),
            test.class_count
        )));
    }
    let labeled: Vec<usize> = (0..test.len()).filter(|&k| test.label(k).is_some()).collect();
    if labeled.is_empty() {
        return Err(Error::Input("test set has no labeled windows".into()));
    }
    let ds = test.subset(&labeled);
    let predicted = predict(model, &ds, modality_id)?;
    let actual: Vec<usize> = ds.labels().into_iter().flatten().collect();
    metrics_from_predictions(&predicted, &actual, test.class_count)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let r = metrics_from_predictions(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.macro_f1, 1.0);
    }

    #[test]
    fn constant_predictor_on_balanced_pair() {
        let r = metrics_from_predictions(&[0, 0, 0, 0], &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(r.accuracy, 0.5);
        // class 0: precision 1/2, recall 1 → f1 2/3; class 1: no predictions → 0
        assert!((r.per_class[0].f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.per_class[1].f1, 0.0);
        assert!((r.macro_f1 - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_support_class_counts_as_zero() {
        let r = metrics_from_predictions(&[0, 1], &[0, 1], 3).unwrap();
        assert_eq!(r.per_class[2].f1, 0.0);
        assert!((r.macro_f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }
}

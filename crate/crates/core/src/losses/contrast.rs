//! Cross-modal feature contrast between two modalities.
//!
//! For anchor `z^a_i` the only positive is its paired feature `z^b_i` and the
//! negatives are the other features of modality b. Same-modality features
//! never enter the denominator, so each modality keeps its own geometry. The
//! [`Negatives::InterAndIntra`] variant adds the `N - 1` same-modality
//! negatives for ablation studies.

use serde::{Deserialize, Serialize};

use super::infonce::{evaluate, Term};
use crate::error::{Error, Result};
use crate::nets::{FeatureBatch, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Negatives {
    /// Only non-paired rows of the other modality.
    InterOnly,
    /// Non-paired rows of both modalities.
    InterAndIntra,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastOutput {
    /// `alpha * mean(L_a→b) + beta * mean(L_b→a)`.
    pub value: f64,
    pub a_to_b: f64,
    pub b_to_a: f64,
    /// Per-sample `L_a→b` then per-sample `L_b→a`.
    pub per_sample: Vec<f64>,
    /// Denominator size for every anchor, in the same order as `per_sample`.
    pub denominator_terms: Vec<usize>,
}

fn check_inputs(za: &FeatureBatch, zb: &FeatureBatch) -> Result<()> {
    if za.values.shape != zb.values.shape || za.values.rank() != 2 {
        return Err(Error::Shape(format!(
            "paired feature batches must share an N×d shape, got {:?} and {:?}",
            za.values.shape, zb.values.shape
        )));
    }
    if za.n() < 2 {
        return Err(Error::Input(format!(
            "contrast needs at least 2 pairs for negatives to exist, got {}",
            za.n()
        )));
    }
    for z in [za, zb] {
        for i in 0..z.n() {
            let norm = z.values.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-3 || !norm.is_finite() {
                return Err(Error::Input(format!(
                    "row {i} of modality {:?} has norm {norm}; features must be row-normalized",
                    z.modality_id
                )));
            }
        }
    }
    Ok(())
}

fn terms(n: usize, alpha: f64, beta: f64, negatives: Negatives) -> Vec<Term> {
    let mut out = Vec::with_capacity(2 * n);
    // matrix 0 = a, matrix 1 = b
    for (anchor_m, other_m, weight) in [(0, 1, alpha), (1, 0, beta)] {
        for i in 0..n {
            let mut negs: Vec<(usize, usize)> =
                (0..n).filter(|&j| j != i).map(|j| (other_m, j)).collect();
            if negatives == Negatives::InterAndIntra {
                negs.extend((0..n).filter(|&j| j != i).map(|j| (anchor_m, j)));
            }
            out.push(Term {
                anchor: (anchor_m, i),
                positive: (other_m, i),
                negatives: negs,
                weight: weight / n as f64,
            });
        }
    }
    out
}

fn run(
    za: &FeatureBatch,
    zb: &FeatureBatch,
    tau: f64,
    alpha: f64,
    beta: f64,
    negatives: Negatives,
    with_grad: bool,
) -> Result<(ContrastOutput, Option<Vec<Tensor>>)> {
    check_inputs(za, zb)?;
    if !(tau > 0.0) {
        return Err(Error::Input(format!("temperature must be positive, got {tau}")));
    }
    let n = za.n();
    let terms = terms(n, alpha, beta, negatives);
    let ev = evaluate(&[&za.values, &zb.values], &terms, tau, with_grad);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let out = ContrastOutput {
        value: ev.total,
        a_to_b: mean(&ev.per_term[..n]),
        b_to_a: mean(&ev.per_term[n..]),
        denominator_terms: terms.iter().map(Term::denominator_terms).collect(),
        per_sample: ev.per_term,
    };
    Ok((out, ev.grads))
}

/// Cross-modal feature contrastive loss.
pub fn cross_modal_loss(
    za: &FeatureBatch,
    zb: &FeatureBatch,
    tau: f64,
    alpha: f64,
    beta: f64,
) -> Result<ContrastOutput> {
    run(za, zb, tau, alpha, beta, Negatives::InterOnly, false).map(|(o, _)| o)
}

/// Contrastive loss whose denominators also hold same-modality negatives.
pub fn intra_negatives_loss(
    za: &FeatureBatch,
    zb: &FeatureBatch,
    tau: f64,
    alpha: f64,
    beta: f64,
) -> Result<ContrastOutput> {
    run(za, zb, tau, alpha, beta, Negatives::InterAndIntra, false).map(|(o, _)| o)
}

/// Loss together with its gradients with respect to `za` and `zb`.
pub fn contrast_with_grad(
    za: &FeatureBatch,
    zb: &FeatureBatch,
    tau: f64,
    alpha: f64,
    beta: f64,
    negatives: Negatives,
) -> Result<(ContrastOutput, Tensor, Tensor)> {
    let (out, grads) = run(za, zb, tau, alpha, beta, negatives, true)?;
    let mut grads = grads.expect("gradients requested");
    let gb = grads.pop().expect("two gradients");
    let ga = grads.pop().expect("two gradients");
    Ok((out, ga, gb))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(rows: &[Vec<f64>], id: &str) -> FeatureBatch {
        FeatureBatch {
            values: Tensor::from_rows(rows).unwrap(),
            modality_id: id.into(),
        }
    }

    #[test]
    fn orthonormal_identity_closed_form() {
        let eye = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let out = cross_modal_loss(&batch(&eye, "a"), &batch(&eye, "b"), 1.0, 0.5, 0.5).unwrap();
        let expected = (1.0 + (-1.0f64).exp()).ln();
        assert!((out.value - expected).abs() < 1e-12);
        for l in &out.per_sample {
            assert!((l - expected).abs() < 1e-12);
        }
        assert!((expected - 0.31326).abs() < 1e-5);
    }

    #[test]
    fn identical_rows_give_log_n() {
        let r = vec![0.6, 0.8];
        let rows = vec![r.clone(), r.clone(), r.clone(), r];
        for tau in [0.05, 1.0, 3.0] {
            let out = cross_modal_loss(&batch(&rows, "a"), &batch(&rows, "b"), tau, 0.5, 0.5).unwrap();
            for l in &out.per_sample {
                assert!((l - 4f64.ln()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_small_or_unnormalized_batches() {
        let one = vec![vec![1.0, 0.0]];
        assert!(cross_modal_loss(&batch(&one, "a"), &batch(&one, "b"), 1.0, 0.5, 0.5).is_err());
        let raw = vec![vec![2.0, 0.0], vec![0.0, 1.0]];
        let eye = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(cross_modal_loss(&batch(&raw, "a"), &batch(&eye, "b"), 1.0, 0.5, 0.5).is_err());
    }

    #[test]
    fn denominator_sizes() {
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|i| {
                let t = i as f64;
                vec![t.cos(), t.sin()]
            })
            .collect();
        let (a, b) = (batch(&rows, "a"), batch(&rows, "b"));
        let inter = cross_modal_loss(&a, &b, 0.5, 0.5, 0.5).unwrap();
        assert!(inter.denominator_terms.iter().all(|&c| c == 5));
        let both = intra_negatives_loss(&a, &b, 0.5, 0.5, 0.5).unwrap();
        assert!(both.denominator_terms.iter().all(|&c| c == 9));
    }
}

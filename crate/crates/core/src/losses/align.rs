//! Pseudo-classification alignment between two modalities.
//!
//! The columns of a batch probability matrix describe which samples fall in
//! each pseudo-class. Column `i` of modality a is pulled toward column `i` of
//! modality b and pushed away from every other column of both modalities
//! (`2 N_cls - 2` negatives). An entropy term over pseudo-class usage,
//! weighted by a negative scale, discourages collapse into a single class.

use super::infonce::{evaluate, Term};
use crate::error::{Error, Result};
use crate::nets::Tensor;

/// Row-stochastic `N × N_cls` pseudo-class probabilities of one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoProbMatrix {
    pub values: Tensor,
    pub modality_id: String,
}

impl PseudoProbMatrix {
    pub fn new(values: Tensor, modality_id: &str) -> Result<Self> {
        if values.rank() != 2 {
            return Err(Error::Shape(format!(
                "pseudo-probabilities must be N×N_cls, got {:?}",
                values.shape
            )));
        }
        for i in 0..values.rows() {
            let row = values.row(i);
            if row.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::Input(format!("row {i} has a negative or NaN entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-6 {
                return Err(Error::Input(format!("row {i} sums to {s}, expected 1")));
            }
        }
        Ok(PseudoProbMatrix {
            values,
            modality_id: modality_id.to_owned(),
        })
    }

    pub fn n(&self) -> usize {
        self.values.rows()
    }

    pub fn class_count(&self) -> usize {
        self.values.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignOutput {
    /// Aligning term plus `lambda_pr * l_pr`.
    pub value: f64,
    /// `(1 / 2N_cls) Σ_i (L̂^a_i + L̂^b_i)`.
    pub aligning: f64,
    /// Entropy of the pseudo-class usage distribution.
    pub l_pr: f64,
    /// Fraction of batch probability mass per pseudo-class, both modalities.
    pub usage: Vec<f64>,
    pub denominator_terms: Vec<usize>,
}

/// Shannon entropy (natural log) of a distribution; zero-mass entries add 0.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|v| **v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}

/// Pseudo-class usage: column mass of both matrices divided by `2N`.
pub fn usage_distribution(ya: &Tensor, yb: &Tensor) -> Vec<f64> {
    let (n, k) = (ya.rows(), ya.cols());
    let mut p = vec![0.0; k];
    for y in [ya, yb] {
        for i in 0..n {
            for (pj, v) in p.iter_mut().zip(y.row(i)) {
                *pj += v;
            }
        }
    }
    p.iter_mut().for_each(|v| *v /= (2 * n) as f64);
    p
}

/// Columns as rows (`N_cls × N`), optionally scaled to unit norm. Returns the
/// column norms alongside.
fn columns(y: &PseudoProbMatrix, normalize: bool) -> Result<(Tensor, Vec<f64>)> {
    let mut q = y.values.transpose2();
    let mut norms = Vec::with_capacity(q.rows());
    for i in 0..q.rows() {
        let row = q.row_mut(i);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 1e-12) {
            return Err(Error::Input(format!(
                "pseudo-class {i} of modality {:?} carries no probability mass",
                y.modality_id
            )));
        }
        if normalize {
            row.iter_mut().for_each(|v| *v /= norm);
        }
        norms.push(norm);
    }
    Ok((q, norms))
}

fn terms(k: usize) -> Vec<Term> {
    let mut out = Vec::with_capacity(2 * k);
    for (anchor_m, other_m) in [(0, 1), (1, 0)] {
        for i in 0..k {
            let negatives = (0..k)
                .filter(|&j| j != i)
                .flat_map(|j| [(0, j), (1, j)])
                .collect();
            out.push(Term {
                anchor: (anchor_m, i),
                positive: (other_m, i),
                negatives,
                weight: 1.0 / (2 * k) as f64,
            });
        }
    }
    out
}

fn run(
    ya: &PseudoProbMatrix,
    yb: &PseudoProbMatrix,
    tau_hat: f64,
    lambda_pr: f64,
    normalize_columns: bool,
    with_grad: bool,
) -> Result<(AlignOutput, Option<(Tensor, Tensor)>)> {
    if ya.values.shape != yb.values.shape {
        return Err(Error::Shape(format!(
            "pseudo-probability matrices differ in shape: {:?} vs {:?}",
            ya.values.shape, yb.values.shape
        )));
    }
    let k = ya.class_count();
    if k < 2 {
        return Err(Error::Input(format!("need at least 2 pseudo-classes, got {k}")));
    }
    if !(tau_hat > 0.0) {
        return Err(Error::Input(format!("temperature must be positive, got {tau_hat}")));
    }
    let (qa, na) = columns(ya, normalize_columns)?;
    let (qb, nb) = columns(yb, normalize_columns)?;
    let terms = terms(k);
    let ev = evaluate(&[&qa, &qb], &terms, tau_hat, with_grad);
    let usage = usage_distribution(&ya.values, &yb.values);
    let l_pr = entropy(&usage);
    let out = AlignOutput {
        value: ev.total + lambda_pr * l_pr,
        aligning: ev.total,
        l_pr,
        denominator_terms: terms.iter().map(Term::denominator_terms).collect(),
        usage: usage.clone(),
    };
    let grads = ev.grads.map(|g| {
        let n = ya.n();
        let mut out = Vec::with_capacity(2);
        for ((gq, q), norms) in g.iter().zip([&qa, &qb]).zip([&na, &nb]) {
            // back through column normalization: dc = (dq - q (q·dq)) / ‖c‖
            let mut dcols = gq.clone();
            if normalize_columns {
                for i in 0..k {
                    let qi = q.row(i);
                    let s: f64 = qi.iter().zip(gq.row(i)).map(|(a, b)| a * b).sum();
                    for (d, qv) in dcols.row_mut(i).iter_mut().zip(qi) {
                        *d = (*d - qv * s) / norms[i];
                    }
                }
            }
            let mut dy = dcols.transpose2();
            // entropy term: d(-Σ p ln p)/dY_ji = -(ln p_i + 1) / 2N
            for j in 0..n {
                for (i, d) in dy.row_mut(j).iter_mut().enumerate() {
                    if usage[i] > 0.0 {
                        *d += lambda_pr * -(usage[i].ln() + 1.0) / (2 * n) as f64;
                    }
                }
            }
            out.push(dy);
        }
        let gb = out.pop().expect("two");
        let ga = out.pop().expect("two");
        (ga, gb)
    });
    Ok((out, grads))
}

/// Pseudo-classification aligning loss with entropy regularization.
pub fn pseudo_align_loss(
    ya: &PseudoProbMatrix,
    yb: &PseudoProbMatrix,
    tau_hat: f64,
    lambda_pr: f64,
    normalize_columns: bool,
) -> Result<AlignOutput> {
    run(ya, yb, tau_hat, lambda_pr, normalize_columns, false).map(|(o, _)| o)
}

/// Loss together with its gradients with respect to both matrices.
pub fn pseudo_align_with_grad(
    ya: &PseudoProbMatrix,
    yb: &PseudoProbMatrix,
    tau_hat: f64,
    lambda_pr: f64,
    normalize_columns: bool,
) -> Result<(AlignOutput, Tensor, Tensor)> {
    let (out, grads) = run(ya, yb, tau_hat, lambda_pr, normalize_columns, true)?;
    let (ga, gb) = grads.expect("gradients requested");
    Ok((out, ga, gb))
}

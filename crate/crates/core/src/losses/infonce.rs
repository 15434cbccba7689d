//! A small InfoNCE evaluator over explicit candidate sets.
//!
//! Each [`Term`] names an anchor row, its single positive row and the rows of
//! its negative set, all referring to rows of a list of matrices. The loss of
//! a term is `-log(exp(s_pos) / (exp(s_pos) + Σ exp(s_neg)))` with
//! `s = anchor · candidate / temperature`. Keeping candidate sets explicit
//! lets callers count denominator terms directly.

use crate::nets::{dot, Tensor};

/// (matrix index, row index).
pub(crate) type RowRef = (usize, usize);

pub(crate) struct Term {
    pub anchor: RowRef,
    pub positive: RowRef,
    pub negatives: Vec<RowRef>,
    pub weight: f64,
}

impl Term {
    /// Number of exponentials summed in the denominator.
    pub fn denominator_terms(&self) -> usize {
        1 + self.negatives.len()
    }
}

pub(crate) struct Evaluated {
    pub total: f64,
    pub per_term: Vec<f64>,
    pub grads: Option<Vec<Tensor>>,
}

pub(crate) fn evaluate(mats: &[&Tensor], terms: &[Term], temperature: f64, with_grad: bool) -> Evaluated {
    let mut grads: Option<Vec<Tensor>> =
        with_grad.then(|| mats.iter().map(|m| Tensor::zeros(&m.shape)).collect());
    let mut per_term = Vec::with_capacity(terms.len());
    let mut total = 0.0;
    let mut logits = Vec::new();
    for term in terms {
        let anchor = mats[term.anchor.0].row(term.anchor.1);
        logits.clear();
        for &(m, r) in std::iter::once(&term.positive).chain(&term.negatives) {
            logits.push(dot(anchor, mats[m].row(r)) / temperature);
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        let lse = max + sum.ln();
        let loss = lse - logits[0];
        per_term.push(loss);
        total += term.weight * loss;

        if let Some(g) = grads.as_mut() {
            for (k, &(m, r)) in std::iter::once(&term.positive)
                .chain(&term.negatives)
                .enumerate()
            {
                let p = (logits[k] - lse).exp();
                let coef = term.weight * (p - if k == 0 { 1.0 } else { 0.0 }) / temperature;
                if coef == 0.0 {
                    continue;
                }
                let cand = mats[m].row(r);
                for (a, c) in g[term.anchor.0].row_mut(term.anchor.1).iter_mut().zip(cand) {
                    *a += coef * c;
                }
                for (c, a) in g[m].row_mut(r).iter_mut().zip(anchor) {
                    *c += coef * a;
                }
            }
        }
    }
    Evaluated {
        total,
        per_term,
        grads,
    }
}

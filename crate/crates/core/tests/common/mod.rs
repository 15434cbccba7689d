#![allow(dead_code)]

use mesen::nets::{m_norm, FeatureBatch, Tensor};
use mesen::losses::PseudoProbMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::new(vec![rows, cols], data).unwrap()
}

pub fn unit_rows(rng: &mut ChaCha8Rng, n: usize, d: usize, id: &str) -> FeatureBatch {
    m_norm(&random_matrix(rng, n, d), id).unwrap()
}

/// Row-stochastic matrix from a softmax of random logits.
pub fn stochastic(rng: &mut ChaCha8Rng, n: usize, k: usize, id: &str) -> PseudoProbMatrix {
    let mut t = random_matrix(rng, n, k);
    for i in 0..n {
        let row = t.row_mut(i);
        row.iter_mut().for_each(|v| *v = (3.0 * *v).exp());
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    PseudoProbMatrix::new(t, id).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Contrastive loss from the full 2N×2N similarity matrix with a mask
/// selecting which entries enter each anchor's denominator.
pub fn brute_contrast(za: &Tensor, zb: &Tensor, tau: f64, alpha: f64, beta: f64, intra: bool) -> f64 {
    let n = za.rows();
    let all: Vec<&[f64]> = (0..n).map(|i| za.row(i)).chain((0..n).map(|i| zb.row(i))).collect();
    let mut sim = vec![vec![0.0; 2 * n]; 2 * n];
    for r in 0..2 * n {
        for c in 0..2 * n {
            sim[r][c] = dot(all[r], all[c]) / tau;
        }
    }
    let in_denominator = |r: usize, c: usize| {
        let same_side = (r < n) == (c < n);
        if same_side {
            intra && r != c
        } else {
            true
        }
    };
    let mut a_to_b = 0.0;
    let mut b_to_a = 0.0;
    for r in 0..2 * n {
        let pos = if r < n { r + n } else { r - n };
        let denom: f64 = (0..2 * n)
            .filter(|&c| in_denominator(r, c))
            .map(|c| sim[r][c].exp())
            .sum();
        let l = -(sim[r][pos].exp() / denom).ln();
        if r < n {
            a_to_b += l;
        } else {
            b_to_a += l;
        }
    }
    alpha * a_to_b / n as f64 + beta * b_to_a / n as f64
}

pub fn column(y: &Tensor, i: usize, normalize: bool) -> Vec<f64> {
    let col: Vec<f64> = (0..y.rows()).map(|j| y.at(j, i)).collect();
    if !normalize {
        return col;
    }
    let norm = dot(&col, &col).sqrt();
    col.into_iter().map(|v| v / norm).collect()
}

/// Aligning loss plus weighted usage entropy, enumerating all 2·N_cls
/// columns for every anchor.
pub fn brute_align(ya: &Tensor, yb: &Tensor, tau_hat: f64, lambda_pr: f64, normalize: bool) -> f64 {
    let k = ya.cols();
    let n = ya.rows();
    let cols: Vec<Vec<f64>> = (0..k)
        .map(|i| column(ya, i, normalize))
        .chain((0..k).map(|i| column(yb, i, normalize)))
        .collect();
    let mut total = 0.0;
    for anchor in 0..2 * k {
        let pos = (anchor + k) % (2 * k);
        let denom: f64 = (0..2 * k)
            .filter(|&c| c != anchor)
            .map(|c| (dot(&cols[anchor], &cols[c]) / tau_hat).exp())
            .sum();
        let num = (dot(&cols[anchor], &cols[pos]) / tau_hat).exp();
        total += -(num / denom).ln();
    }
    let aligning = total / (2 * k) as f64;
    let usage: Vec<f64> = (0..k)
        .map(|i| (0..n).map(|j| ya.at(j, i) + yb.at(j, i)).sum::<f64>() / (2 * n) as f64)
        .collect();
    let entropy: f64 = -usage.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>();
    aligning + lambda_pr * entropy
}

/// Relative error with an absolute floor, the usual finite-difference
/// comparison.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Central difference of `f` at coordinate `i` of `x`.
pub fn central_diff(x: &mut [f64], i: usize, h: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = x[i];
    x[i] = orig + h;
    let up = f(x);
    x[i] = orig - h;
    let down = f(x);
    x[i] = orig;
    (up - down) / (2.0 * h)
}

pub fn permuted_rows(t: &Tensor, perm: &[usize]) -> Tensor {
    t.gather_rows(perm)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

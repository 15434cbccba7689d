//! The two pretraining losses on hand-built batches: closed-form values,
//! denominator sizes with and without same-modality negatives, and the
//! balanced pretraining objective.

use mesen::losses::{
    balance, cross_modal_loss, intra_negatives_loss, pseudo_align_loss, PseudoProbMatrix,
};
use mesen::nets::{m_norm, Tensor};

fn identity(n: usize) -> Tensor {
    let mut t = Tensor::zeros(&[n, n]);
    for i in 0..n {
        t.data[i * n + i] = 1.0;
    }
    t
}

fn main() -> mesen::Result<()> {
    // Orthonormal paired features: each anchor sees its positive at
    // similarity 1 and one negative at similarity 0.
    let za = m_norm(&identity(2), "acc")?;
    let zb = m_norm(&identity(2), "gyro")?;
    let inter = cross_modal_loss(&za, &zb, 1.0, 0.5, 0.5)?;
    println!("cross-modal loss at tau=1: {:.6}", inter.value);
    println!("closed form log(1+e^-1):   {:.6}", (1.0 + (-1.0f64).exp()).ln());
    println!("denominator terms per anchor: {:?}", inter.denominator_terms);

    let both = intra_negatives_loss(&za, &zb, 1.0, 0.5, 0.5)?;
    println!(
        "with same-modality negatives: {:.6}, terms {:?}",
        both.value, both.denominator_terms
    );

    // Identity pseudo-probabilities: every pseudo-class is used once per
    // modality, so the usage distribution is uniform.
    let ya = PseudoProbMatrix::new(identity(3), "acc")?;
    let yb = PseudoProbMatrix::new(identity(3), "gyro")?;
    let align = pseudo_align_loss(&ya, &yb, 1.0, -1.0, true)?;
    println!(
        "aligning {:.5}  usage entropy {:.5}  total {:.5}  terms {:?}",
        align.aligning, align.l_pr, align.value, align.denominator_terms
    );

    let (delta, l_pt) = balance(inter.value, align.value);
    println!("balanced objective: delta {delta:.4}, l_pt {l_pt:.4}");
    Ok(())
}

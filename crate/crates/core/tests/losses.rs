mod common;

use common::*;
use mesen::default_config;
use mesen::losses::{
    balance, contrast_with_grad, cross_entropy, cross_modal_loss, entropy, finetune_loss,
    finetune_reg, intra_negatives_loss, pretrain_loss, pseudo_align_loss, pseudo_align_with_grad,
    usage_distribution, Negatives, PseudoProbMatrix, DELTA_EPS,
};
use mesen::nets::{build_encoder, build_head, m_norm, FeatureBatch, Tensor};
use mesen::seed;
use rand::seq::SliceRandom;
use rand::Rng;

#[test]
fn contrast_matches_masked_similarity_oracle() {
    let mut r = rng(1);
    for _ in 0..200 {
        let n = r.gen_range(2..=8);
        let d = r.gen_range(2..=6);
        let tau = r.gen_range(0.1..2.0);
        let alpha = r.gen_range(0.0..1.0);
        let za = unit_rows(&mut r, n, d, "a");
        let zb = unit_rows(&mut r, n, d, "b");
        let ours = cross_modal_loss(&za, &zb, tau, alpha, 1.0 - alpha).unwrap().value;
        let oracle = brute_contrast(&za.values, &zb.values, tau, alpha, 1.0 - alpha, false);
        assert!((ours - oracle).abs() <= 1e-10, "{ours} vs {oracle}");
        let ours = intra_negatives_loss(&za, &zb, tau, alpha, 1.0 - alpha).unwrap().value;
        let oracle = brute_contrast(&za.values, &zb.values, tau, alpha, 1.0 - alpha, true);
        assert!((ours - oracle).abs() <= 1e-10);
    }
}

#[test]
fn align_matches_column_enumeration_oracle() {
    let mut r = rng(2);
    for _ in 0..200 {
        let n = r.gen_range(2..=8);
        let k = r.gen_range(2..=6);
        let ya = stochastic(&mut r, n, k, "a");
        let yb = stochastic(&mut r, n, k, "b");
        for normalize in [true, false] {
            let ours = pseudo_align_loss(&ya, &yb, 1.0, -1.0, normalize).unwrap().value;
            let oracle = brute_align(&ya.values, &yb.values, 1.0, -1.0, normalize);
            assert!((ours - oracle).abs() <= 1e-10, "{ours} vs {oracle}");
        }
    }
}

#[test]
fn identical_rows_give_log_n_per_sample() {
    let row = vec![0.6, 0.8];
    let z = Tensor::from_rows(&vec![row; 4]).unwrap();
    let za = m_norm(&z, "a").unwrap();
    let zb = m_norm(&z, "b").unwrap();
    for tau in [0.1, 1.0, 3.0] {
        let out = cross_modal_loss(&za, &zb, tau, 0.5, 0.5).unwrap();
        for l in &out.per_sample {
            assert!((l - 4f64.ln()).abs() < 1e-12);
        }
    }
}

#[test]
fn uniform_pseudo_rows_give_log_of_candidates() {
    let y = Tensor::new(vec![4, 3], vec![1.0 / 3.0; 12]).unwrap();
    let ya = PseudoProbMatrix::new(y.clone(), "a").unwrap();
    let yb = PseudoProbMatrix::new(y, "b").unwrap();
    let out = pseudo_align_loss(&ya, &yb, 1.0, -1.0, true).unwrap();
    assert!((out.aligning - 5f64.ln()).abs() < 1e-12);
    assert!((out.l_pr - 3f64.ln()).abs() < 1e-12);
}

#[test]
fn modality_swap_symmetry() {
    let mut r = rng(3);
    for _ in 0..50 {
        let za = unit_rows(&mut r, 6, 5, "a");
        let zb = unit_rows(&mut r, 6, 5, "b");
        let ab = cross_modal_loss(&za, &zb, 0.2, 0.5, 0.5).unwrap().value;
        let ba = cross_modal_loss(&zb, &za, 0.2, 0.5, 0.5).unwrap().value;
        assert!((ab - ba).abs() <= 1e-12);
        let ya = stochastic(&mut r, 6, 4, "a");
        let yb = stochastic(&mut r, 6, 4, "b");
        let ab = pseudo_align_loss(&ya, &yb, 1.0, -1.0, true).unwrap().value;
        let ba = pseudo_align_loss(&yb, &ya, 1.0, -1.0, true).unwrap().value;
        assert!((ab - ba).abs() <= 1e-12);
    }
}

#[test]
fn pretrain_loss_is_permutation_invariant() {
    let mut r = rng(4);
    let config = default_config(4, 5).unwrap();
    for _ in 0..30 {
        let n = 7;
        let za = unit_rows(&mut r, n, 5, "a");
        let zb = unit_rows(&mut r, n, 5, "b");
        let ya = stochastic(&mut r, n, 4, "a");
        let yb = stochastic(&mut r, n, 4, "b");
        let base = pretrain_loss(&za, &zb, &ya, &yb, &config).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut r);
        let pf = |f: &FeatureBatch| FeatureBatch {
            values: f.values.gather_rows(&perm),
            modality_id: f.modality_id.clone(),
        };
        let pp = |p: &PseudoProbMatrix| {
            PseudoProbMatrix::new(p.values.gather_rows(&perm), &p.modality_id).unwrap()
        };
        let shuffled = pretrain_loss(&pf(&za), &pf(&zb), &pp(&ya), &pp(&yb), &config).unwrap();
        assert!((base.l_pt - shuffled.l_pt).abs() < 1e-12);
        assert!((base.l_pt - (base.l_cmf + base.delta * base.l_mpc)).abs() < 1e-9);
        assert!(base.delta > 0.0);
    }
}

#[test]
fn balance_guard_on_zero_aligning_loss() {
    let (delta, l_pt) = balance(1.5, 0.0);
    assert_eq!(delta, 1.5 / DELTA_EPS);
    assert!(delta.is_finite() && l_pt.is_finite());
}

#[test]
fn aligned_orthonormal_beats_random_configurations() {
    let n = 4;
    let mut eye = Tensor::zeros(&[n, n]);
    for i in 0..n {
        eye.data[i * n + i] = 1.0;
    }
    let zb = m_norm(&eye, "b").unwrap();
    let best = cross_modal_loss(&m_norm(&eye, "a").unwrap(), &zb, 0.5, 0.5, 0.5)
        .unwrap()
        .value;
    let mut r = rng(5);
    for _ in 0..100 {
        let za = unit_rows(&mut r, n, n, "a");
        let v = cross_modal_loss(&za, &zb, 0.5, 0.5, 0.5).unwrap().value;
        assert!(best < v);
    }
}

#[test]
fn concentrating_usage_lowers_entropy_and_raises_penalty() {
    let mut r = rng(6);
    let ya = stochastic(&mut r, 8, 4, "a");
    let yb = stochastic(&mut r, 8, 4, "b");
    let before = entropy(&usage_distribution(&ya.values, &yb.values));
    // Move half of every row's mass into pseudo-class 0.
    let squash = |p: &PseudoProbMatrix| {
        let mut v = p.values.clone();
        for i in 0..v.rows() {
            let row = v.row_mut(i);
            let moved: f64 = row[1..].iter().map(|x| x * 0.5).sum();
            row[1..].iter_mut().for_each(|x| *x *= 0.5);
            row[0] += moved;
        }
        PseudoProbMatrix::new(v, &p.modality_id).unwrap()
    };
    let (sa, sb) = (squash(&ya), squash(&yb));
    let after = entropy(&usage_distribution(&sa.values, &sb.values));
    assert!(after < before);
    assert!(-after > -before);
}

#[test]
fn denominator_sizes() {
    let mut r = rng(7);
    for n in 2..=8 {
        let za = unit_rows(&mut r, n, 3, "a");
        let zb = unit_rows(&mut r, n, 3, "b");
        let inter = cross_modal_loss(&za, &zb, 0.1, 0.5, 0.5).unwrap();
        let both = intra_negatives_loss(&za, &zb, 0.1, 0.5, 0.5).unwrap();
        assert!(inter.denominator_terms.iter().all(|&t| t == n));
        assert!(both.denominator_terms.iter().all(|&t| t == 2 * n - 1));
        assert_ne!(inter.value, both.value);
    }
    for k in 2..=6 {
        let ya = stochastic(&mut r, 8, k, "a");
        let yb = stochastic(&mut r, 8, k, "b");
        let out = pseudo_align_loss(&ya, &yb, 1.0, -1.0, true).unwrap();
        assert!(out.denominator_terms.iter().all(|&t| t == 2 * k - 1));
    }
}

#[test]
fn contrast_input_gradients_match_finite_differences() {
    let mut r = rng(8);
    let (n, d, tau) = (5, 4, 0.3);
    let za = unit_rows(&mut r, n, d, "a");
    let zb = unit_rows(&mut r, n, d, "b");
    for negatives in [Negatives::InterOnly, Negatives::InterAndIntra] {
        let (_, ga, gb) = contrast_with_grad(&za, &zb, tau, 0.3, 0.7, negatives).unwrap();
        let eval = |a: &[f64], b: &[f64]| {
            let fa = FeatureBatch { values: Tensor::new(vec![n, d], a.to_vec()).unwrap(), modality_id: "a".into() };
            let fb = FeatureBatch { values: Tensor::new(vec![n, d], b.to_vec()).unwrap(), modality_id: "b".into() };
            contrast_with_grad(&fa, &fb, tau, 0.3, 0.7, negatives).unwrap().0.value
        };
        let mut a = za.values.data.clone();
        let b = zb.values.data.clone();
        for i in 0..n * d {
            let num = central_diff(&mut a, i, 1e-5, |x| eval(x, &b));
            assert!(rel_err(ga.data[i], num) <= 1e-4, "a[{i}]: {} vs {num}", ga.data[i]);
        }
        let mut b = zb.values.data.clone();
        for i in 0..n * d {
            let num = central_diff(&mut b, i, 1e-5, |x| eval(&a, x));
            assert!(rel_err(gb.data[i], num) <= 1e-4);
        }
    }
}

#[test]
fn align_input_gradients_match_finite_differences() {
    let mut r = rng(9);
    let (n, k) = (6, 4);
    let ya = stochastic(&mut r, n, k, "a");
    let yb = stochastic(&mut r, n, k, "b");
    let (_, ga, gb) = pseudo_align_with_grad(&ya, &yb, 1.0, -1.0, true).unwrap();
    // Perturbed matrices stay within the row-sum tolerance only for tiny
    // steps, so evaluate the unchecked oracle instead of the validated type.
    let eval = |a: &[f64], b: &[f64]| {
        brute_align(
            &Tensor::new(vec![n, k], a.to_vec()).unwrap(),
            &Tensor::new(vec![n, k], b.to_vec()).unwrap(),
            1.0,
            -1.0,
            true,
        )
    };
    let mut a = ya.values.data.clone();
    let b = yb.values.data.clone();
    for i in 0..n * k {
        let num = central_diff(&mut a, i, 1e-5, |x| eval(x, &b));
        assert!(rel_err(ga.data[i], num) <= 1e-4, "a[{i}]");
    }
    let mut b = yb.values.data.clone();
    for i in 0..n * k {
        let num = central_diff(&mut b, i, 1e-5, |x| eval(&a, x));
        assert!(rel_err(gb.data[i], num) <= 1e-4, "b[{i}]");
    }
}

#[test]
fn regularizer_scales_per_layer() {
    let mut rng = seed::rng(3);
    let mut enc = build_encoder(2, 16, 4, 3, &mut rng).unwrap();
    let head = build_head(4, 3, &mut rng).unwrap();
    let gamma = vec![1.0, 0.5, 2.0, 0.25];
    let base = finetune_reg(&enc, &head, &gamma).unwrap();
    let layer2 = enc.layers[2].sum_squares();
    for p in &mut enc.layers[2].params {
        p.value.data.iter_mut().for_each(|v| *v *= 2.0);
    }
    let doubled = finetune_reg(&enc, &head, &gamma).unwrap();
    assert!((doubled - base - 3.0 * gamma[2] * layer2).abs() < 1e-9 * doubled.abs());
    assert!(finetune_reg(&enc, &head, &[1.0, 1.0]).is_err());

    let uniform = finetune_reg(&enc, &head, &[1.0; 4]).unwrap();
    assert!((uniform - enc.sum_squares() - head.sum_squares()).abs() < 1e-12);
}

#[test]
fn finetune_loss_examples() {
    let mut rng = seed::rng(4);
    let mut enc = build_encoder(2, 16, 4, 3, &mut rng).unwrap();
    let mut head = build_head(4, 6, &mut rng).unwrap();
    let mut config = default_config(6, 8).unwrap();
    config.lambda_fr = 0.0;
    let uniform = Tensor::new(vec![2, 6], vec![1.0 / 6.0; 12]).unwrap();
    let v = finetune_loss(&uniform, &[0, 5], &enc, &head, None, &config).unwrap();
    assert!((v - 6f64.ln()).abs() < 1e-12);

    let mut onehot = Tensor::zeros(&[2, 6]);
    onehot.data[1] = 1.0;
    onehot.data[6 + 4] = 1.0;
    assert_eq!(finetune_loss(&onehot, &[1, 4], &enc, &head, None, &config).unwrap(), 0.0);

    config.lambda_fr = 1.0;
    enc.params_mut().chain(head.params_mut()).for_each(|p| p.data.iter_mut().for_each(|v| *v = 0.0));
    let ce = cross_entropy(&uniform, &[2, 3]).unwrap();
    assert_eq!(finetune_loss(&uniform, &[2, 3], &enc, &head, None, &config).unwrap(), ce);
    assert!(finetune_loss(&uniform, &[6, 0], &enc, &head, None, &config).is_err());
}

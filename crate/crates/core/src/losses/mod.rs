//! Training objectives: cross-modal feature contrast, pseudo-classification
//! alignment, their balanced combination for pretraining, and the
//! layer-aware fine-tuning loss.
//!
//! Everything here is a pure function of its inputs. Functions suffixed
//! `_with_grad` also return analytic gradients with respect to their inputs;
//! the training pipeline feeds those into the model tape.

mod align;
mod contrast;
mod infonce;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use align::{
    entropy, pseudo_align_loss, pseudo_align_with_grad, usage_distribution, AlignOutput,
    PseudoProbMatrix,
};
pub use contrast::{
    contrast_with_grad, cross_modal_loss, intra_negatives_loss, ContrastOutput, Negatives,
};

use crate::config::{RegAnchor, TrainConfig};
use crate::error::{Error, Result};
use crate::nets::{FeatureBatch, LayeredModel, Tensor};

/// Guard for the balancing ratio when the aligning loss is near zero.
pub const DELTA_EPS: f64 = 1e-8;

/// Per-step record of the pretraining objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub epoch: usize,
    pub step: usize,
    pub l_cmf: f64,
    pub l_mpc: f64,
    pub l_pr: f64,
    pub delta: f64,
    pub l_pt: f64,
    /// Directional contrastive terms keyed `"<from>-><to>"`.
    pub per_direction: BTreeMap<String, f64>,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.l_cmf, self.l_mpc, self.l_pr, self.delta, self.l_pt]
            .iter()
            .all(|v| v.is_finite())
    }
}

impl std::fmt::Display for LossBreakdown {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "l_cmf={} l_mpc={} l_pr={} delta={} l_pt={}",
            self.l_cmf, self.l_mpc, self.l_pr, self.delta, self.l_pt
        )
    }
}

/// Which terms of the pretraining objective are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Objective {
    pub negatives: Negatives,
    pub contrast: bool,
    pub align: bool,
    pub entropy: bool,
}

impl Objective {
    pub const FULL: Objective = Objective {
        negatives: Negatives::InterOnly,
        contrast: true,
        align: true,
        entropy: true,
    };
}

pub struct PretrainGrads {
    pub breakdown: LossBreakdown,
    /// dL_PT / dz per modality.
    pub dz: Vec<Tensor>,
    /// dL_PT / dY per modality.
    pub dy: Vec<Tensor>,
}

/// Balanced pretraining loss over two or more modalities.
///
/// With more than two modalities both components are averaged over all
/// unordered modality pairs, the earlier modality taking the `alpha` role.
/// The balancing ratio `delta = |L_CMF| / max(|L_MPC|, eps)` is a constant
/// with respect to the gradients.
pub fn pretrain_objective(
    z: &[FeatureBatch],
    y: &[PseudoProbMatrix],
    config: &TrainConfig,
    objective: Objective,
) -> Result<PretrainGrads> {
    let m = z.len();
    if m < 2 || y.len() != m {
        return Err(Error::Input(format!(
            "need matching features and pseudo-probabilities for at least 2 modalities, got {} and {}",
            z.len(),
            y.len()
        )));
    }
    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|a| (a + 1..m).map(move |b| (a, b)))
        .collect();
    let scale = 1.0 / pairs.len() as f64;
    let lambda = if objective.entropy { config.lambda_pr } else { 0.0 };

    let mut dz_cmf: Vec<Tensor> = z.iter().map(|f| Tensor::zeros(&f.values.shape)).collect();
    let mut dy_mpc: Vec<Tensor> = y.iter().map(|p| Tensor::zeros(&p.values.shape)).collect();
    let (mut l_cmf, mut l_mpc, mut l_pr) = (0.0, 0.0, 0.0);
    let mut per_direction = BTreeMap::new();

    for &(a, b) in &pairs {
        if objective.contrast {
            let (out, ga, gb) = contrast_with_grad(
                &z[a],
                &z[b],
                config.tau,
                config.alpha,
                config.beta,
                objective.negatives,
            )?;
            l_cmf += scale * out.value;
            add_scaled(&mut dz_cmf[a], &ga, scale);
            add_scaled(&mut dz_cmf[b], &gb, scale);
            let (ia, ib) = (&z[a].modality_id, &z[b].modality_id);
            per_direction.insert(format!("{ia}->{ib}"), out.a_to_b);
            per_direction.insert(format!("{ib}->{ia}"), out.b_to_a);
        }
        if objective.align {
            let (out, ga, gb) = pseudo_align_with_grad(
                &y[a],
                &y[b],
                config.tau_hat,
                lambda,
                config.normalize_pseudo_columns,
            )?;
            l_mpc += scale * out.value;
            l_pr += scale * out.l_pr;
            add_scaled(&mut dy_mpc[a], &ga, scale);
            add_scaled(&mut dy_mpc[b], &gb, scale);
        }
    }

    let delta = if objective.contrast && objective.align {
        l_cmf.abs() / l_mpc.abs().max(DELTA_EPS)
    } else {
        1.0
    };
    dy_mpc
        .iter_mut()
        .for_each(|t| t.data.iter_mut().for_each(|v| *v *= delta));
    Ok(PretrainGrads {
        breakdown: LossBreakdown {
            epoch: 0,
            step: 0,
            l_cmf,
            l_mpc,
            l_pr,
            delta,
            l_pt: l_cmf + delta * l_mpc,
            per_direction,
        },
        dz: dz_cmf,
        dy: dy_mpc,
    })
}

/// Two-modality pretraining loss `L_PT = L_CMF + delta * L_MPC`.
pub fn pretrain_loss(
    za: &FeatureBatch,
    zb: &FeatureBatch,
    ya: &PseudoProbMatrix,
    yb: &PseudoProbMatrix,
    config: &TrainConfig,
) -> Result<LossBreakdown> {
    let z = [za.clone(), zb.clone()];
    let y = [ya.clone(), yb.clone()];
    pretrain_objective(&z, &y, config, Objective::FULL).map(|g| g.breakdown)
}

/// Combine precomputed component values the way [`pretrain_loss`] does.
pub fn balance(l_cmf: f64, l_mpc: f64) -> (f64, f64) {
    let delta = l_cmf.abs() / l_mpc.abs().max(DELTA_EPS);
    (delta, l_cmf + delta * l_mpc)
}

fn add_scaled(dst: &mut Tensor, src: &Tensor, s: f64) {
    dst.data
        .iter_mut()
        .zip(&src.data)
        .for_each(|(d, v)| *d += s * v);
}

fn check_gamma(encoder: &LayeredModel, gamma: &[f64]) -> Result<()> {
    if gamma.len() != encoder.layers.len() {
        return Err(Error::Input(format!(
            "gamma has {} weights for {} encoder layers",
            gamma.len(),
            encoder.layers.len()
        )));
    }
    Ok(())
}

fn check_anchor(encoder: &LayeredModel, anchor: &LayeredModel) -> Result<()> {
    let same = encoder.layers.len() == anchor.layers.len()
        && encoder
            .params()
            .zip(anchor.params())
            .all(|(a, b)| a.shape == b.shape);
    if !same {
        return Err(Error::Input(
            "anchor encoder does not match the fine-tuned encoder's layout".into(),
        ));
    }
    Ok(())
}

/// Layer-aware regularizer `Σ_i gamma_i ‖θ_e,i‖² + ‖θ_c‖²`.
pub fn finetune_reg(encoder: &LayeredModel, head: &LayeredModel, gamma: &[f64]) -> Result<f64> {
    finetune_reg_anchored(encoder, head, gamma, None)
}

/// As [`finetune_reg`], measuring encoder layers as distances from `anchor`
/// when one is given.
pub fn finetune_reg_anchored(
    encoder: &LayeredModel,
    head: &LayeredModel,
    gamma: &[f64],
    anchor: Option<&LayeredModel>,
) -> Result<f64> {
    check_gamma(encoder, gamma)?;
    let enc: f64 = match anchor {
        None => encoder
            .layers
            .iter()
            .zip(gamma)
            .map(|(l, g)| g * l.sum_squares())
            .sum(),
        Some(anchor) => {
            check_anchor(encoder, anchor)?;
            encoder
                .layers
                .iter()
                .zip(&anchor.layers)
                .zip(gamma)
                .map(|((l, a), g)| {
                    let d: f64 = l
                        .params
                        .iter()
                        .zip(&a.params)
                        .flat_map(|(p, q)| p.value.data.iter().zip(&q.value.data))
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum();
                    g * d
                })
                .sum()
        }
    };
    Ok(enc + head.sum_squares())
}

/// Gradients of [`finetune_reg_anchored`] for encoder and head parameters, in
/// `params()` order.
pub fn finetune_reg_grads(
    encoder: &LayeredModel,
    head: &LayeredModel,
    gamma: &[f64],
    anchor: Option<&LayeredModel>,
) -> Result<(Vec<Tensor>, Vec<Tensor>)> {
    check_gamma(encoder, gamma)?;
    if let Some(a) = anchor {
        check_anchor(encoder, a)?;
    }
    let mut enc = Vec::new();
    for (li, layer) in encoder.layers.iter().enumerate() {
        for (pi, p) in layer.params.iter().enumerate() {
            let mut g = p.value.clone();
            if let Some(a) = anchor {
                let base = &a.layers[li].params[pi].value;
                g.data.iter_mut().zip(&base.data).for_each(|(v, b)| *v -= b);
            }
            g.data.iter_mut().for_each(|v| *v *= 2.0 * gamma[li]);
            enc.push(g);
        }
    }
    let head_g = head
        .params()
        .map(|p| {
            let mut g = p.clone();
            g.data.iter_mut().for_each(|v| *v *= 2.0);
            g
        })
        .collect();
    Ok((enc, head_g))
}

fn check_labels(probs: &Tensor, labels: &[usize]) -> Result<()> {
    if probs.rank() != 2 || probs.rows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} labels for predictions of shape {:?}",
            labels.len(),
            probs.shape
        )));
    }
    if let Some(l) = labels.iter().find(|&&l| l >= probs.cols()) {
        return Err(Error::Input(format!(
            "label {l} out of range for {} classes",
            probs.cols()
        )));
    }
    Ok(())
}

/// Mean multiclass cross-entropy of class probabilities.
pub fn cross_entropy(probs: &Tensor, labels: &[usize]) -> Result<f64> {
    cross_entropy_with_grad(probs, labels).map(|(v, _)| v)
}

pub fn cross_entropy_with_grad(probs: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    check_labels(probs, labels)?;
    let n = labels.len() as f64;
    let mut grad = Tensor::zeros(&probs.shape);
    let mut total = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        let p = probs.at(i, l).max(f64::MIN_POSITIVE);
        total -= p.ln();
        grad.row_mut(i)[l] = -1.0 / (n * p);
    }
    Ok((total / n, grad))
}

/// `L_CLS + lambda_fr * L_FR`. `anchor` supplies pretrained encoder values
/// when the config regularizes toward the checkpoint.
pub fn finetune_loss(
    probs: &Tensor,
    labels: &[usize],
    encoder: &LayeredModel,
    head: &LayeredModel,
    anchor: Option<&LayeredModel>,
    config: &TrainConfig,
) -> Result<f64> {
    let cls = cross_entropy(probs, labels)?;
    let anchor = resolve_anchor(config, anchor)?;
    let reg = finetune_reg_anchored(encoder, head, &config.gamma, anchor)?;
    Ok(cls + config.lambda_fr * reg)
}

pub(crate) fn resolve_anchor<'a>(
    config: &TrainConfig,
    anchor: Option<&'a LayeredModel>,
) -> Result<Option<&'a LayeredModel>> {
    match config.reg_anchor {
        RegAnchor::Zero => Ok(None),
        RegAnchor::Checkpoint => anchor.map(Some).ok_or_else(|| {
            Error::Input("regularizing toward the checkpoint needs the pretrained encoder".into())
        }),
    }
}

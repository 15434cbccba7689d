use rand::seq::SliceRandom;

use super::optim::Adam;
use crate::config::TrainConfig;
use crate::data::FewShotSelection;
use crate::error::{Error, Result};
use crate::losses::{cross_entropy_with_grad, finetune_reg_anchored, finetune_reg_grads, resolve_anchor};
use crate::nets::{build_encoder, build_head, Checkpoint, FinetunedModel, LayeredModel, Tape, Tensor};
use crate::paired::PairedDataset;
use crate::seed;

/// A trained unimodal model and its per-step training loss.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub model: FinetunedModel,
    pub losses: Vec<f64>,
    pub batch_sizes: Vec<usize>,
}

fn labeled_batch(
    train: &PairedDataset,
    selection: &FewShotSelection,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if selection.is_empty() {
        return Err(Error::Input("the few-label selection is empty".into()));
    }
    let mut idx = Vec::with_capacity(selection.len());
    let mut labels = Vec::with_capacity(selection.len());
    for (class, list) in selection.labeled_indices.iter().enumerate() {
        for &k in list {
            if k >= train.len() {
                return Err(Error::Input(format!(
                    "selected index {k} is outside the {}-sample training split",
                    train.len()
                )));
            }
            if train.label(k) != Some(class) {
                return Err(Error::Input(format!(
                    "selected index {k} is not labeled {class} in the training split"
                )));
            }
            idx.push(k);
            labels.push(class);
        }
    }
    Ok((idx, labels))
}

struct Fit<'a> {
    encoder: LayeredModel,
    anchor: Option<&'a LayeredModel>,
    /// Weight of the layer-aware penalty; zero for the supervised baseline.
    lambda: f64,
}

fn fit(
    method: &str,
    modality_id: &str,
    spec: Fit<'_>,
    train: &PairedDataset,
    selection: &FewShotSelection,
    config: &TrainConfig,
) -> Result<FitReport> {
    let m = train.modality_index(modality_id)?;
    let (idx, labels) = labeled_batch(train, selection)?;
    if train.class_count != config.class_count {
        return Err(Error::Input(format!(
            "dataset has {} classes, config expects {}",
            train.class_count, config.class_count
        )));
    }
    let mut encoder = spec.encoder;
    let mut rng = seed::stream(config.seed, &format!("finetune-head/{modality_id}"));
    let mut head = build_head(encoder.output_dim(), config.class_count, &mut rng)?;
    let mut shuffle = seed::stream(config.seed, "finetune-shuffle");
    let mut opt = Adam::new(config.learning_rate);
    let batch_size = config.finetune_batch.min(idx.len());
    let mut order: Vec<usize> = (0..idx.len()).collect();
    let mut losses = Vec::new();
    let mut batch_sizes = Vec::new();

    for _ in 0..config.epochs_finetune {
        order.shuffle(&mut shuffle);
        for chunk in order.chunks(batch_size) {
            let samples: Vec<usize> = chunk.iter().map(|&i| idx[i]).collect();
            let targets: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let tape = Tape::new();
            let enc_p = encoder.bind(&tape);
            let head_p = head.bind(&tape);
            let x = tape.leaf(train.batch(m, &samples));
            let h = encoder.forward(&tape, &enc_p, x)?;
            let probs = head.forward(&tape, &head_p, h)?;
            let (cls, dprobs) = cross_entropy_with_grad(&tape.value(probs), &targets)?;
            let grads = tape.backward(&[(probs, dprobs)]);
            let mut flat: Vec<Tensor> = enc_p
                .iter()
                .chain(&head_p)
                .map(|v| grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(&tape.shape(*v))))
                .collect();
            drop(grads);
            let mut loss = cls;
            if spec.lambda > 0.0 {
                let reg = finetune_reg_anchored(&encoder, &head, &config.gamma, spec.anchor)?;
                let (ge, gh) = finetune_reg_grads(&encoder, &head, &config.gamma, spec.anchor)?;
                for (f, r) in flat.iter_mut().zip(ge.iter().chain(&gh)) {
                    f.data
                        .iter_mut()
                        .zip(&r.data)
                        .for_each(|(a, b)| *a += spec.lambda * b);
                }
                loss += spec.lambda * reg;
            }
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step: losses.len(),
                    breakdown: format!("l_ft={loss}"),
                });
            }
            opt.step(encoder.params_mut().chain(head.params_mut()), &flat);
            losses.push(loss);
            batch_sizes.push(samples.len());
        }
    }
    Ok(FitReport {
        model: FinetunedModel::new(method, modality_id, encoder, head),
        losses,
        batch_sizes,
    })
}

/// Fine-tune the pretrained encoder of `modality_id` with a fresh head on
/// the selected labeled windows.
pub fn finetune(
    checkpoint: &Checkpoint,
    modality_id: &str,
    train: &PairedDataset,
    selection: &FewShotSelection,
    config: &TrainConfig,
) -> Result<FinetunedModel> {
    finetune_with_history(checkpoint, modality_id, train, selection, config).map(|r| r.model)
}

pub fn finetune_with_history(
    checkpoint: &Checkpoint,
    modality_id: &str,
    train: &PairedDataset,
    selection: &FewShotSelection,
    config: &TrainConfig,
) -> Result<FitReport> {
    config.validate()?;
    let pretrained = &checkpoint.modality(modality_id)?.encoder;
    let anchor = resolve_anchor(config, Some(pretrained))?;
    fit(
        "mesen",
        modality_id,
        Fit {
            encoder: pretrained.clone(),
            anchor,
            lambda: config.lambda_fr,
        },
        train,
        selection,
        config,
    )
}

/// Train the same encoder + head architecture from random initialization
/// with plain cross-entropy on the same labeled windows.
pub fn train_supervised_baseline(
    modality_id: &str,
    train: &PairedDataset,
    selection: &FewShotSelection,
    config: &TrainConfig,
) -> Result<FitReport> {
    config.validate()?;
    let m = train.modality_index(modality_id)?;
    let (channels, timesteps) = train
        .shape(m)
        .ok_or_else(|| Error::Input("empty training split".into()))?;
    let mut rng = seed::stream(config.seed, &format!("baseline-encoder/{modality_id}"));
    let encoder = build_encoder(
        channels,
        timesteps,
        config.encoder_width,
        config.encoder_kernel,
        &mut rng,
    )?;
    fit(
        "labeltrain",
        modality_id,
        Fit {
            encoder,
            anchor: None,
            lambda: 0.0,
        },
        train,
        selection,
        config,
    )
}

use rand::seq::SliceRandom;

use super::optim::Adam;
use super::PretrainVariant;
use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::losses::{pretrain_objective, LossBreakdown, PseudoProbMatrix};
use crate::nets::{
    build_encoder, build_head, build_projector, m_norm_tape, Checkpoint, FeatureBatch,
    LayeredModel, ModalityNets, Tape, Tensor, Var, CHECKPOINT_FORMAT,
};
use crate::paired::{validate_paired, PairedDataset};
use crate::seed;

/// Mean loss components over one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSummary {
    pub epoch: usize,
    pub steps: usize,
    pub l_cmf: f64,
    pub l_mpc: f64,
    pub l_pr: f64,
    pub l_pt: f64,
}

struct PretrainState {
    nets: Vec<ModalityNets>,
    pseudo_head: LayeredModel,
    optimizer: Adam,
    history: Vec<LossBreakdown>,
}

impl PretrainState {
    fn init(ds: &PairedDataset, config: &TrainConfig) -> Result<Self> {
        let mut nets = Vec::with_capacity(ds.modalities.len());
        for (m, id) in ds.modalities.iter().enumerate() {
            let (channels, timesteps) = ds
                .shape(m)
                .ok_or_else(|| Error::Input("empty dataset".into()))?;
            let mut rng = seed::stream(config.seed, &format!("encoder/{id}"));
            let encoder = build_encoder(
                channels,
                timesteps,
                config.encoder_width,
                config.encoder_kernel,
                &mut rng,
            )?;
            let mut rng = seed::stream(config.seed, &format!("projector/{id}"));
            let projector = build_projector(config.encoder_width, config.feature_dim, &mut rng)?;
            nets.push(ModalityNets {
                modality_id: id.clone(),
                encoder,
                projector,
            });
        }
        let mut rng = seed::stream(config.seed, "pseudo-head");
        let pseudo_head = build_head(config.feature_dim, config.class_count, &mut rng)?;
        Ok(PretrainState {
            nets,
            pseudo_head,
            optimizer: Adam::new(config.learning_rate),
            history: Vec::new(),
        })
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.nets
            .iter_mut()
            .flat_map(|n| n.encoder.params_mut().chain(n.projector.params_mut()))
            .chain(self.pseudo_head.params_mut())
    }

    fn step(
        &mut self,
        ds: &PairedDataset,
        batch: &[usize],
        config: &TrainConfig,
        variant: PretrainVariant,
    ) -> Result<LossBreakdown> {
        let tape = Tape::new();
        let head_params = self.pseudo_head.bind(&tape);
        let mut bound: Vec<(Vec<Var>, Vec<Var>)> = Vec::new();
        let mut z_vars = Vec::new();
        let mut y_vars = Vec::new();
        for (m, nets) in self.nets.iter().enumerate() {
            let enc_p = nets.encoder.bind(&tape);
            let proj_p = nets.projector.bind(&tape);
            let x = tape.leaf(ds.batch(m, batch));
            let h = nets.encoder.forward(&tape, &enc_p, x)?;
            let hh = nets.projector.forward(&tape, &proj_p, h)?;
            z_vars.push(m_norm_tape(&tape, hh, config.norm_mode)?);
            y_vars.push(self.pseudo_head.forward(&tape, &head_params, hh)?);
            bound.push((enc_p, proj_p));
        }
        let z: Vec<FeatureBatch> = z_vars
            .iter()
            .zip(&self.nets)
            .map(|(v, n)| FeatureBatch {
                values: tape.value(*v).clone(),
                modality_id: n.modality_id.clone(),
            })
            .collect();
        let y = y_vars
            .iter()
            .zip(&self.nets)
            .map(|(v, n)| PseudoProbMatrix::new(tape.value(*v).clone(), &n.modality_id))
            .collect::<Result<Vec<_>>>()?;
        let objective = variant.objective();
        let out = pretrain_objective(&z, &y, config, objective)?;
        if !out.breakdown.is_finite() {
            return Ok(out.breakdown);
        }

        let mut seeds = Vec::new();
        if objective.contrast {
            seeds.extend(z_vars.iter().copied().zip(out.dz));
        }
        if objective.align {
            seeds.extend(y_vars.iter().copied().zip(out.dy));
        }
        let grads = tape.backward(&seeds);
        let grad_of = |v: &Var| {
            grads
                .get(*v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(&tape.shape(*v)))
        };
        let mut flat = Vec::new();
        for (enc_p, proj_p) in &bound {
            flat.extend(enc_p.iter().chain(proj_p).map(grad_of));
        }
        flat.extend(head_params.iter().map(grad_of));
        drop(grads);
        let mut opt = std::mem::replace(&mut self.optimizer, Adam::new(0.0));
        opt.step(self.params_mut(), &flat);
        self.optimizer = opt;
        Ok(out.breakdown)
    }
}

/// Multimodal pretraining with the full objective.
pub fn pretrain(ds: &PairedDataset, config: &TrainConfig) -> Result<Checkpoint> {
    pretrain_variant(ds, config, PretrainVariant::Mesen)
}

/// Pretraining whose contrastive denominators also hold same-modality
/// negatives (`2N - 1` terms).
pub fn ablation_intra_negatives(ds: &PairedDataset, config: &TrainConfig) -> Result<Checkpoint> {
    pretrain_variant(ds, config, PretrainVariant::IntraNegatives)
}

pub fn pretrain_variant(
    ds: &PairedDataset,
    config: &TrainConfig,
    variant: PretrainVariant,
) -> Result<Checkpoint> {
    pretrain_with(ds, config, variant, |_| {})
}

/// Pretraining with a callback invoked after every epoch.
pub fn pretrain_with(
    ds: &PairedDataset,
    config: &TrainConfig,
    variant: PretrainVariant,
    mut on_epoch: impl FnMut(&EpochSummary),
) -> Result<Checkpoint> {
    config.validate()?;
    if ds.modalities.len() < 2 {
        return Err(Error::Input(format!(
            "pretraining needs at least 2 modalities, got {}",
            ds.modalities.len()
        )));
    }
    if let Some(v) = validate_paired(ds).first() {
        return Err(Error::Data(format!("invalid paired dataset: {v:?}")));
    }
    if config.pretrain_batch > ds.len() {
        return Err(Error::Input(format!(
            "pretrain batch size {} exceeds the {} available pairs",
            config.pretrain_batch,
            ds.len()
        )));
    }
    if config.pretrain_batch < 2 {
        return Err(Error::Input("pretrain batch size must be at least 2".into()));
    }

    let mut state = PretrainState::init(ds, config)?;
    let mut shuffle = seed::stream(config.seed, "pretrain-shuffle");
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut step = 0;
    for epoch in 0..config.epochs_pretrain {
        order.shuffle(&mut shuffle);
        let first = state.history.len();
        for batch in order.chunks(config.pretrain_batch) {
            if batch.len() < 2 {
                continue;
            }
            let mut b = state.step(ds, batch, config, variant)?;
            b.epoch = epoch;
            b.step = step;
            if !b.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step,
                    breakdown: b.to_string(),
                });
            }
            state.history.push(b);
            step += 1;
        }
        let done = &state.history[first..];
        let n = done.len().max(1) as f64;
        on_epoch(&EpochSummary {
            epoch,
            steps: done.len(),
            l_cmf: done.iter().map(|b| b.l_cmf).sum::<f64>() / n,
            l_mpc: done.iter().map(|b| b.l_mpc).sum::<f64>() / n,
            l_pr: done.iter().map(|b| b.l_pr).sum::<f64>() / n,
            l_pt: done.iter().map(|b| b.l_pt).sum::<f64>() / n,
        });
    }
    Ok(Checkpoint {
        format: CHECKPOINT_FORMAT.to_owned(),
        variant,
        config: config.clone(),
        modalities: state.nets,
        pseudo_head: state.pseudo_head,
        epochs_completed: config.epochs_pretrain,
        loss_history: state.history,
    })
}

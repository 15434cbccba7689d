//! On-disk archives for pretrained and fine-tuned models.
//!
//! Both archives are JSON documents carrying a format tag. Every model is
//! stored as its architecture plus an ordered list of layers, each mapping a
//! layer id to its named parameter arrays (shape + flat row-major values).
//! Files are written to a temporary sibling and renamed into place.

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::model::LayeredModel;
use super::tensor::Tensor;
use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::losses::LossBreakdown;
use crate::pipeline::PretrainVariant;

pub const CHECKPOINT_FORMAT: &str = "mesen-checkpoint/v1";
pub const MODEL_FORMAT: &str = "mesen-model/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityNets {
    pub modality_id: String,
    pub encoder: LayeredModel,
    pub projector: LayeredModel,
}

/// Result of the multimodal pretraining stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub variant: PretrainVariant,
    pub config: TrainConfig,
    pub modalities: Vec<ModalityNets>,
    pub pseudo_head: LayeredModel,
    pub epochs_completed: usize,
    pub loss_history: Vec<LossBreakdown>,
}

impl Checkpoint {
    pub fn modality(&self, id: &str) -> Result<&ModalityNets> {
        self.modalities
            .iter()
            .find(|m| m.modality_id == id)
            .ok_or_else(|| Error::UnknownModality(id.to_owned()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &serde_json::to_vec(self)?)
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let ckpt: Checkpoint = read_json(path)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!(
                "{}: unsupported format {:?}, expected {CHECKPOINT_FORMAT:?}",
                path.display(),
                ckpt.format
            )));
        }
        ckpt.config.validate()?;
        Ok(ckpt)
    }

    /// Mean over the final epoch's steps of the pseudo-class usage entropy.
    pub fn final_epoch_usage_entropy(&self) -> Option<f64> {
        let last = self.loss_history.last()?.epoch;
        let vals: Vec<f64> = self
            .loss_history
            .iter()
            .filter(|b| b.epoch == last)
            .map(|b| b.l_pr)
            .collect();
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// A unimodal classifier: encoder followed by a classifier head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetunedModel {
    pub format: String,
    pub method: String,
    pub modality_id: String,
    pub encoder: LayeredModel,
    pub head: LayeredModel,
}

impl FinetunedModel {
    pub fn new(method: &str, modality_id: &str, encoder: LayeredModel, head: LayeredModel) -> Self {
        FinetunedModel {
            format: MODEL_FORMAT.to_owned(),
            method: method.to_owned(),
            modality_id: modality_id.to_owned(),
            encoder,
            head,
        }
    }

    pub fn class_count(&self) -> usize {
        self.head.output_dim()
    }

    /// Class probabilities for a `[B, C, T]` batch of windows.
    pub fn predict_proba(&self, windows: &Tensor) -> Result<Tensor> {
        let h = self.encoder.infer(windows)?;
        self.head.infer(&h)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &serde_json::to_vec(self)?)
    }

    pub fn load(path: &Path) -> Result<FinetunedModel> {
        let m: FinetunedModel = read_json(path)?;
        if m.format != MODEL_FORMAT {
            return Err(Error::Checkpoint(format!(
                "{}: unsupported format {:?}, expected {MODEL_FORMAT:?}",
                path.display(),
                m.format
            )));
        }
        Ok(m)
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Input(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

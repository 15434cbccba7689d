use std::path::Path;

use crate::error::{Error, Result};
use crate::losses::LossBreakdown;
use crate::nets::{Checkpoint, Tensor};
use crate::paired::PairedDataset;

const CHUNK: usize = 256;

/// Projector outputs (pre-normalization features) of every window of one
/// modality, `N × N_fc`.
pub fn projector_features(ckpt: &Checkpoint, ds: &PairedDataset, modality_id: &str) -> Result<Tensor> {
    let nets = ckpt.modality(modality_id)?;
    let m = ds.modality_index(modality_id)?;
    let dim = nets.projector.output_dim();
    let all: Vec<usize> = (0..ds.len()).collect();
    let mut data = Vec::with_capacity(ds.len() * dim);
    for chunk in all.chunks(CHUNK) {
        let h = nets.encoder.infer(&ds.batch(m, chunk))?;
        data.extend(nets.projector.infer(&h)?.data);
    }
    Tensor::new(vec![ds.len(), dim], data)
}

/// Write `sample_index,label,f0,…,f{N_fc-1}` rows for external embedding
/// and plotting tools.
pub fn export_features(
    ckpt: &Checkpoint,
    ds: &PairedDataset,
    modality_id: &str,
    out_path: &Path,
) -> Result<()> {
    let feats = projector_features(ckpt, ds, modality_id)?;
    let mut w = csv::Writer::from_path(out_path).map_err(|e| csv_open_error(out_path, e))?;
    let mut header = vec!["sample_index".to_owned(), "label".to_owned()];
    header.extend((0..feats.cols()).map(|i| format!("f{i}")));
    w.write_record(&header)?;
    for k in 0..ds.len() {
        let mut rec = vec![k.to_string(), ds.label(k).map(|l| l.to_string()).unwrap_or_default()];
        rec.extend(feats.row(k).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(out_path, e))
}

/// One row per pretraining step: `epoch,step,l_cmf,l_mpc,l_pr,delta,l_pt`.
pub fn write_loss_history(history: &[LossBreakdown], out_path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(out_path).map_err(|e| csv_open_error(out_path, e))?;
    w.write_record(["epoch", "step", "l_cmf", "l_mpc", "l_pr", "delta", "l_pt"])?;
    for b in history {
        w.write_record([
            b.epoch.to_string(),
            b.step.to_string(),
            b.l_cmf.to_string(),
            b.l_mpc.to_string(),
            b.l_pr.to_string(),
            b.delta.to_string(),
            b.l_pt.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(out_path, e))
}

fn csv_open_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Data(format!("{}: {other:?}", path.display())),
    }
}

//! Differentiable building blocks: per-modality encoders and projectors, the
//! shared pseudo-classification head, classifier heads, and feature
//! normalization.

mod checkpoint;
mod model;
mod tape;
mod tensor;

pub use checkpoint::{Checkpoint, FinetunedModel, ModalityNets, CHECKPOINT_FORMAT, MODEL_FORMAT};
pub use model::{
    build_encoder, build_head, build_projector, encoder_sequence_len, Architecture, Layer,
    LayeredModel, Param, ENCODER_LAYERS,
};
pub use tape::{Grads, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tensor::dot;

use crate::config::NormMode;
use crate::error::{Error, Result};

/// Per-sample feature vectors of one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBatch {
    pub values: Tensor,
    pub modality_id: String,
}

impl FeatureBatch {
    pub fn n(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }
}

/// Project each row of an `N×d` matrix onto the unit sphere.
pub fn m_norm(features: &Tensor, modality_id: &str) -> Result<FeatureBatch> {
    if features.rank() != 2 {
        return Err(Error::Shape(format!(
            "expected an N×d matrix, got {:?}",
            features.shape
        )));
    }
    let mut values = features.clone();
    for i in 0..values.rows() {
        let row = values.row_mut(i);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm >= 1e-12) {
            return Err(Error::Input(format!(
                "row {i} has norm {norm:e}; cannot normalize a degenerate feature"
            )));
        }
        row.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(FeatureBatch {
        values,
        modality_id: modality_id.to_owned(),
    })
}

/// Differentiable counterpart of [`m_norm`], honoring the configured mode.
pub fn m_norm_tape(tape: &Tape, x: Var, mode: NormMode) -> Result<Var> {
    match mode {
        NormMode::RowL2 => tape.row_l2_normalize(x),
        NormMode::BatchStandardize => {
            let s = tape.batch_standardize(x);
            tape.row_l2_normalize(s)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn m_norm_examples() {
        let t = Tensor::from_rows(&[vec![3.0, 4.0]]).unwrap();
        let z = m_norm(&t, "a").unwrap();
        assert!((z.values.data[0] - 0.6).abs() < 1e-15);
        assert!((z.values.data[1] - 0.8).abs() < 1e-15);

        let again = m_norm(&z.values, "a").unwrap();
        for (x, y) in again.values.data.iter().zip(&z.values.data) {
            assert!((x - y).abs() < 1e-12);
        }

        let mut rng = crate::seed::rng(5);
        let data = (0..8 * 16).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let z = m_norm(&Tensor::new(vec![8, 16], data).unwrap(), "a").unwrap();
        for i in 0..8 {
            let n: f64 = z.values.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn m_norm_rejects_zero_row() {
        let t = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(m_norm(&t, "a").is_err());
    }
}

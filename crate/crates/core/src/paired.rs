//! Paired multimodal windows and their structural checks.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::Tensor;

/// One fixed-length multichannel window from one modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityWindow {
    pub modality_id: String,
    pub channels: usize,
    pub timesteps: usize,
    /// Row-major `channels × timesteps`.
    pub data: Vec<f64>,
    pub user_id: u32,
    pub label: Option<usize>,
}

impl ModalityWindow {
    pub fn shape(&self) -> (usize, usize) {
        (self.channels, self.timesteps)
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.timesteps..(c + 1) * self.timesteps]
    }
}

/// Index-aligned windows across modalities: index `k` of every modality
/// records the same activity instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDataset {
    pub modalities: Vec<String>,
    pub windows: Vec<Vec<ModalityWindow>>,
    pub class_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationField {
    Length,
    ModalityId,
    Shape,
    NonFinite,
    UserId,
    Label,
    LabelRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub index: Option<usize>,
    pub field: ViolationField,
    pub modalities: Vec<String>,
    pub detail: String,
}

/// Check every structural invariant of a paired dataset. An empty result
/// means the dataset is well formed.
pub fn validate_paired(ds: &PairedDataset) -> Vec<Violation> {
    let mut out = Vec::new();
    if ds.windows.len() != ds.modalities.len() {
        out.push(Violation {
            index: None,
            field: ViolationField::Length,
            modalities: ds.modalities.clone(),
            detail: format!(
                "{} modality ids but {} window lists",
                ds.modalities.len(),
                ds.windows.len()
            ),
        });
        return out;
    }
    let lens: Vec<usize> = ds.windows.iter().map(Vec::len).collect();
    if lens.windows(2).any(|w| w[0] != w[1]) {
        out.push(Violation {
            index: None,
            field: ViolationField::Length,
            modalities: ds.modalities.clone(),
            detail: format!("per-modality lengths differ: {lens:?}"),
        });
    }
    let n = lens.iter().copied().min().unwrap_or(0);

    for (m, (id, list)) in ds.modalities.iter().zip(&ds.windows).enumerate() {
        let shape = list.first().map(ModalityWindow::shape);
        for (k, w) in list.iter().enumerate() {
            let mut push = |field, detail: String| {
                out.push(Violation {
                    index: Some(k),
                    field,
                    modalities: vec![ds.modalities[m].clone()],
                    detail,
                })
            };
            if &w.modality_id != id {
                push(
                    ViolationField::ModalityId,
                    format!("window tagged {:?} in modality {id:?}", w.modality_id),
                );
            }
            if Some(w.shape()) != shape || w.data.len() != w.channels * w.timesteps {
                push(
                    ViolationField::Shape,
                    format!("shape {:?} differs from {:?}", w.shape(), shape),
                );
            }
            if w.data.iter().any(|v| !v.is_finite()) {
                push(ViolationField::NonFinite, "non-finite sample value".into());
            }
            if w.label.is_some_and(|l| l >= ds.class_count) {
                push(
                    ViolationField::LabelRange,
                    format!("label {:?} outside [0, {})", w.label, ds.class_count),
                );
            }
        }
    }

    for k in 0..n {
        let first = &ds.windows[0][k];
        let mismatched = |f: &dyn Fn(&ModalityWindow) -> bool| -> Vec<String> {
            ds.windows
                .iter()
                .zip(&ds.modalities)
                .filter(|(list, _)| f(&list[k]))
                .map(|(_, id)| id.clone())
                .collect()
        };
        let users = mismatched(&|w| w.user_id != first.user_id);
        if !users.is_empty() {
            out.push(Violation {
                index: Some(k),
                field: ViolationField::UserId,
                modalities: std::iter::once(ds.modalities[0].clone()).chain(users).collect(),
                detail: "user ids differ across modalities".into(),
            });
        }
        let labels = mismatched(&|w| w.label.is_some() && first.label.is_some() && w.label != first.label);
        if !labels.is_empty() {
            out.push(Violation {
                index: Some(k),
                field: ViolationField::Label,
                modalities: std::iter::once(ds.modalities[0].clone()).chain(labels).collect(),
                detail: "labels differ across modalities".into(),
            });
        }
    }
    out
}

impl PairedDataset {
    pub fn len(&self) -> usize {
        self.windows.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn modality_index(&self, id: &str) -> Result<usize> {
        self.modalities
            .iter()
            .position(|m| m == id)
            .ok_or_else(|| Error::UnknownModality(id.to_owned()))
    }

    /// `(channels, timesteps)` of a modality.
    pub fn shape(&self, modality: usize) -> Option<(usize, usize)> {
        self.windows[modality].first().map(ModalityWindow::shape)
    }

    pub fn user(&self, k: usize) -> u32 {
        self.windows[0][k].user_id
    }

    /// Label of sample `k`, taken from the first modality carrying one.
    pub fn label(&self, k: usize) -> Option<usize> {
        self.windows.iter().find_map(|list| list[k].label)
    }

    pub fn labels(&self) -> Vec<Option<usize>> {
        (0..self.len()).map(|k| self.label(k)).collect()
    }

    pub fn users(&self) -> BTreeSet<u32> {
        (0..self.len()).map(|k| self.user(k)).collect()
    }

    /// Stack the windows at `indices` into a `[B, C, T]` tensor.
    pub fn batch(&self, modality: usize, indices: &[usize]) -> Tensor {
        let (c, t) = self.shape(modality).unwrap_or((0, 0));
        let mut data = Vec::with_capacity(indices.len() * c * t);
        for &k in indices {
            data.extend_from_slice(&self.windows[modality][k].data);
        }
        Tensor {
            shape: vec![indices.len(), c, t],
            data,
        }
    }

    /// New dataset holding the samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> PairedDataset {
        PairedDataset {
            modalities: self.modalities.clone(),
            windows: self
                .windows
                .iter()
                .map(|list| indices.iter().map(|&k| list[k].clone()).collect())
                .collect(),
            class_count: self.class_count,
        }
    }

    pub fn without_labels(&self) -> PairedDataset {
        let mut ds = self.clone();
        ds.windows
            .iter_mut()
            .flatten()
            .for_each(|w| w.label = None);
        ds
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window(id: &str, user: u32, label: Option<usize>) -> ModalityWindow {
        ModalityWindow {
            modality_id: id.into(),
            channels: 1,
            timesteps: 2,
            data: vec![0.0, 1.0],
            user_id: user,
            label,
        }
    }

    fn two_modality(n: usize) -> PairedDataset {
        PairedDataset {
            modalities: vec!["a".into(), "b".into()],
            windows: ["a", "b"]
                .iter()
                .map(|id| (0..n).map(|k| window(id, k as u32 % 3, Some(k % 2))).collect())
                .collect(),
            class_count: 2,
        }
    }

    #[test]
    fn well_formed_dataset_has_no_violations() {
        assert!(validate_paired(&two_modality(6)).is_empty());
    }

    #[test]
    fn mismatched_user_reported_at_index() {
        let mut ds = two_modality(6);
        ds.windows[1][3].user_id = 99;
        let v = validate_paired(&ds);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].index, Some(3));
        assert_eq!(v[0].field, ViolationField::UserId);
        assert_eq!(v[0].modalities, vec!["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn unequal_lengths_reported() {
        let mut ds = two_modality(6);
        ds.windows[1].pop();
        let v = validate_paired(&ds);
        assert!(v.iter().any(|v| v.field == ViolationField::Length));
    }

    #[test]
    fn label_and_shape_problems_reported() {
        let mut ds = two_modality(4);
        ds.windows[0][1].label = Some(1 - ds.windows[0][1].label.unwrap());
        ds.windows[1][2].data = vec![f64::NAN, 0.0];
        ds.windows[0][0].label = Some(7);
        let fields: Vec<_> = validate_paired(&ds).into_iter().map(|v| v.field).collect();
        assert!(fields.contains(&ViolationField::Label));
        assert!(fields.contains(&ViolationField::NonFinite));
        assert!(fields.contains(&ViolationField::LabelRange));
    }

    #[test]
    fn stripping_labels_keeps_structure() {
        let ds = two_modality(4).without_labels();
        assert!(validate_paired(&ds).is_empty());
        assert!(ds.labels().iter().all(Option::is_none));
    }
}

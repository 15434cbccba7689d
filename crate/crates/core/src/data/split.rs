use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paired::PairedDataset;
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: PairedDataset,
    pub validation: PairedDataset,
    pub test: PairedDataset,
}

/// Split by user: train users form the training set, and the evaluation
/// users' samples are shuffled into validation and test halves, stratified
/// per class when every class has at least two evaluation samples.
pub fn split_by_user(
    ds: &PairedDataset,
    train_users: &BTreeSet<u32>,
    eval_users: &BTreeSet<u32>,
    seed: u64,
) -> Result<Split> {
    let overlap: Vec<u32> = train_users.intersection(eval_users).copied().collect();
    if !overlap.is_empty() {
        return Err(Error::Input(format!(
            "users {overlap:?} appear in both the training and evaluation sets"
        )));
    }
    let present = ds.users();
    let uncovered: Vec<u32> = present
        .iter()
        .filter(|u| !train_users.contains(u) && !eval_users.contains(u))
        .copied()
        .collect();
    if !uncovered.is_empty() {
        return Err(Error::Input(format!(
            "users {uncovered:?} are in neither the training nor the evaluation set"
        )));
    }

    let mut train = Vec::new();
    let mut eval = Vec::new();
    for k in 0..ds.len() {
        if train_users.contains(&ds.user(k)) {
            train.push(k);
        } else {
            eval.push(k);
        }
    }

    let mut rng = seed::stream(seed, "split");
    let mut by_class: BTreeMap<Option<usize>, Vec<usize>> = BTreeMap::new();
    for &k in &eval {
        by_class.entry(ds.label(k)).or_default().push(k);
    }
    let stratify = by_class.values().all(|v| v.len() >= 2);
    let (mut validation, mut test) = (Vec::new(), Vec::new());
    if stratify {
        // alternate which half receives the odd sample so totals stay within 1
        let mut extra_to_validation = true;
        for group in by_class.values_mut() {
            group.shuffle(&mut rng);
            let mut half = group.len() / 2;
            if group.len() % 2 == 1 {
                if extra_to_validation {
                    half += 1;
                }
                extra_to_validation = !extra_to_validation;
            }
            validation.extend_from_slice(&group[..half]);
            test.extend_from_slice(&group[half..]);
        }
    } else {
        eval.shuffle(&mut rng);
        let half = eval.len().div_ceil(2);
        validation.extend_from_slice(&eval[..half]);
        test.extend_from_slice(&eval[half..]);
    }
    validation.sort_unstable();
    test.sort_unstable();
    Ok(Split {
        train: ds.subset(&train),
        validation: ds.subset(&validation),
        test: ds.subset(&test),
    })
}

/// Default user partition: the last `eval_fraction` of the sorted user ids
/// (at least one user) are held out for evaluation.
pub fn partition_users(ds: &PairedDataset, eval_fraction: f64) -> (BTreeSet<u32>, BTreeSet<u32>) {
    let users: Vec<u32> = ds.users().into_iter().collect();
    let n_eval = ((users.len() as f64 * eval_fraction).round() as usize)
        .clamp(1, users.len().saturating_sub(1).max(1));
    let cut = users.len() - n_eval;
    (
        users[..cut].iter().copied().collect(),
        users[cut..].iter().copied().collect(),
    )
}

/// Labeled indices into a training split, `n` per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotSelection {
    pub labeled_indices: Vec<Vec<usize>>,
    pub n_per_class: usize,
    pub labeling_rate: f64,
}

impl FewShotSelection {
    /// All selected indices, class by class.
    pub fn indices(&self) -> Vec<usize> {
        self.labeled_indices.concat()
    }

    pub fn len(&self) -> usize {
        self.labeled_indices.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Fraction of the training set carrying labels.
pub fn labeling_rate(n_per_class: usize, class_count: usize, train_len: usize) -> f64 {
    (n_per_class * class_count) as f64 / train_len as f64
}

pub fn sample_few_labels(
    train: &PairedDataset,
    n_per_class: usize,
    seed: u64,
) -> Result<FewShotSelection> {
    if n_per_class == 0 {
        return Err(Error::Input("labels per class must be at least 1".into()));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); train.class_count];
    for k in 0..train.len() {
        if let Some(l) = train.label(k) {
            if l < train.class_count {
                by_class[l].push(k);
            }
        }
    }
    let mut rng = seed::stream(seed, "few-labels");
    let mut labeled = Vec::with_capacity(train.class_count);
    for (class, candidates) in by_class.iter().enumerate() {
        if candidates.len() < n_per_class {
            return Err(Error::InsufficientLabels {
                class,
                available: candidates.len(),
                requested: n_per_class,
            });
        }
        let mut chosen: Vec<usize> = candidates
            .choose_multiple(&mut rng, n_per_class)
            .copied()
            .collect();
        chosen.sort_unstable();
        labeled.push(chosen);
    }
    Ok(FewShotSelection {
        labeled_indices: labeled,
        n_per_class,
        labeling_rate: labeling_rate(n_per_class, train.class_count, train.len()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SynthSpec};

    fn users(r: std::ops::Range<u32>) -> BTreeSet<u32> {
        r.collect()
    }

    #[test]
    fn split_keeps_user_sets_apart() {
        let ds = generate_synthetic(&SynthSpec::two_modality(2, 30, 1, 1, 8), 0).unwrap();
        let s = split_by_user(&ds, &users(0..24), &users(24..30), 1).unwrap();
        assert!(s.train.users().iter().all(|u| *u < 24));
        assert!(s.validation.users().iter().chain(s.test.users().iter()).all(|u| *u >= 24));
        assert_eq!(s.train.len() + s.validation.len() + s.test.len(), ds.len());
    }

    #[test]
    fn eval_halves_are_balanced() {
        let ds = generate_synthetic(&SynthSpec::two_modality(2, 10, 10, 1, 8), 0).unwrap();
        let s = split_by_user(&ds, &users(0..5), &users(5..10), 3).unwrap();
        assert_eq!((s.validation.len(), s.test.len()), (50, 50));

        let ds = generate_synthetic(&SynthSpec::two_modality(3, 2, 3, 1, 8), 0).unwrap();
        let s = split_by_user(&ds, &users(0..1), &users(1..2), 3).unwrap();
        assert_eq!(s.validation.len() + s.test.len(), 9);
        assert!(s.validation.len().abs_diff(s.test.len()) <= 1);
    }

    #[test]
    fn overlapping_users_rejected() {
        let ds = generate_synthetic(&SynthSpec::two_modality(2, 4, 1, 1, 8), 0).unwrap();
        assert!(split_by_user(&ds, &users(0..3), &users(2..4), 0).is_err());
        assert!(split_by_user(&ds, &users(0..2), &users(2..3), 0).is_err());
    }

    #[test]
    fn few_label_selection() {
        let ds = generate_synthetic(&SynthSpec::two_modality(6, 4, 5, 1, 8), 0).unwrap();
        let sel = sample_few_labels(&ds, 2, 9).unwrap();
        assert_eq!(sel.len(), 12);
        for (class, idx) in sel.labeled_indices.iter().enumerate() {
            assert_eq!(idx.len(), 2);
            assert!(idx.iter().all(|&k| ds.label(k) == Some(class)));
        }
        assert_eq!(sel, sample_few_labels(&ds, 2, 9).unwrap());
        assert!(sample_few_labels(&ds, 0, 9).is_err());
    }

    #[test]
    fn missing_class_named_in_error() {
        let ds = generate_synthetic(&SynthSpec::two_modality(6, 2, 2, 1, 8), 0).unwrap();
        let keep: Vec<usize> = (0..ds.len()).filter(|&k| ds.label(k) != Some(4)).collect();
        let err = sample_few_labels(&ds.subset(&keep), 1, 0).unwrap_err();
        assert!(matches!(err, Error::InsufficientLabels { class: 4, .. }), "{err}");
    }

    #[test]
    fn labeling_rate_one_per_class() {
        let r = labeling_rate(1, 6, 1714);
        assert_eq!(format!("{:.2}%", 100.0 * r), "0.35%");
    }
}

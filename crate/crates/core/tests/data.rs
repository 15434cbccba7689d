mod common;

use std::collections::BTreeSet;
use std::fs;

use mesen::data::{
    generate_synthetic, generate_synthetic_traced, ingest_csv, labeling_rate, render,
    sample_few_labels, split_by_user, write_csv_layout, IngestOptions, SynthSpec,
};
use mesen::{validate_paired, Error};
use proptest::prelude::*;

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Mean |Pearson| over all (channel of a, channel of b) pairs.
fn window_correlation(a: &[f64], b: &[f64], channels: usize, t: usize) -> f64 {
    let mut total = 0.0;
    for ca in 0..channels {
        for cb in 0..channels {
            total += pearson(&a[ca * t..(ca + 1) * t], &b[cb * t..(cb + 1) * t]).abs();
        }
    }
    total / (channels * channels) as f64
}

#[test]
fn paired_windows_correlate_more_than_unpaired() {
    let mut spec = SynthSpec::two_modality(4, 5, 10, 3, 32);
    spec.correlation_strength = 1.0;
    spec.noise_sigma = 0.1;
    let ds = generate_synthetic(&spec, 17).unwrap();
    assert_eq!(ds.len(), 200);
    let (mut within, mut cross, mut n_cross) = (0.0, 0.0, 0usize);
    for i in 0..ds.len() {
        let a = &ds.windows[0][i].data;
        within += window_correlation(a, &ds.windows[1][i].data, 3, 32);
        for j in 0..ds.len() {
            if j != i {
                cross += window_correlation(a, &ds.windows[1][j].data, 3, 32);
                n_cross += 1;
            }
        }
    }
    let within = within / ds.len() as f64;
    let cross = cross / n_cross as f64;
    assert!(within > cross, "within {within} vs cross {cross}");
}

#[test]
fn zero_noise_pairs_are_renderings_of_one_latent() {
    let mut spec = SynthSpec::two_modality(2, 2, 3, 2, 16);
    spec.noise_sigma = 0.0;
    spec.correlation_strength = 1.0;
    let (ds, traces) = generate_synthetic_traced(&spec, 4).unwrap();
    for (k, tr) in traces.iter().enumerate() {
        assert_eq!(tr.latents[0], tr.latents[1]);
        for m in 0..2 {
            let expected = render(&spec.modality_specs[m], m, &tr.latents[m], &tr.gains[m]);
            assert_eq!(ds.windows[m][k].data, expected);
        }
    }
    assert_eq!(generate_synthetic(&spec, 4).unwrap(), ds);
}

#[test]
fn csv_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = SynthSpec::two_modality(2, 1, 5, 2, 8);
    spec.noise_sigma = 0.05;
    let ds = generate_synthetic(&spec, 2).unwrap();
    assert_eq!(ds.len(), 10);
    write_csv_layout(&ds, dir.path()).unwrap();
    let back = ingest_csv(dir.path(), None, &IngestOptions::default()).unwrap();
    assert_eq!(back, ds);

    // drop sample 7 from one modality file
    let path = dir.path().join("gyro.csv");
    let text = fs::read_to_string(&path).unwrap();
    let kept: Vec<&str> = text.lines().filter(|l| !l.starts_with("7,")).collect();
    fs::write(&path, kept.join("\n") + "\n").unwrap();
    match ingest_csv(dir.path(), None, &IngestOptions::default()) {
        Err(Error::MissingIndices { file, indices }) => {
            assert_eq!(file, "gyro.csv");
            assert_eq!(indices, vec![7]);
        }
        other => panic!("expected missing index error, got {other:?}"),
    }

    write_csv_layout(&ds, dir.path()).unwrap();
    let path = dir.path().join("acc.csv");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    let mut cells: Vec<String> = lines[3].split(',').map(str::to_owned).collect();
    cells[4] = "abc".into();
    lines[3] = cells.join(",");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    match ingest_csv(dir.path(), None, &IngestOptions::default()) {
        Err(Error::Parse { file, row, column, value }) => {
            assert_eq!(file, "acc.csv");
            assert_eq!(row, 4);
            assert_eq!(column, "c0_t3");
            assert_eq!(value, "abc");
        }
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn long_rows_are_windowed_with_overlap() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate_synthetic(&SynthSpec::two_modality(2, 1, 2, 2, 32), 3).unwrap();
    write_csv_layout(&ds, dir.path()).unwrap();
    let schema = vec![("acc".to_owned(), (2, 16)), ("gyro".to_owned(), (2, 16))];
    let plain = ingest_csv(dir.path(), Some(&schema), &IngestOptions { overlap: 0, class_count: Some(2) }).unwrap();
    assert_eq!(plain.len(), 2 * ds.len());
    let overlapped = ingest_csv(dir.path(), Some(&schema), &IngestOptions { overlap: 8, class_count: Some(2) }).unwrap();
    assert_eq!(overlapped.len(), 3 * ds.len());
    // second window of the first row starts 8 steps in
    let src = &ds.windows[0][0].data;
    assert_eq!(&overlapped.windows[0][1].data[..16], &src[8..24]);
    assert!(validate_paired(&overlapped).is_empty());
}

#[test]
fn split_by_user_follows_user_sets() {
    let ds = generate_synthetic(&SynthSpec::two_modality(3, 30, 2, 2, 8), 5).unwrap();
    let train_users: BTreeSet<u32> = (0..24).collect();
    let eval_users: BTreeSet<u32> = (24..30).collect();
    let split = split_by_user(&ds, &train_users, &eval_users, 1).unwrap();
    assert!(split.train.users().is_subset(&train_users));
    assert_eq!(split.train.len(), 24 * 6);
    let eval = split.validation.len() + split.test.len();
    assert_eq!(eval, 36);
    assert!(split.validation.len().abs_diff(split.test.len()) <= 1);

    let mut bad = eval_users.clone();
    bad.insert(3);
    assert!(split_by_user(&ds, &train_users, &bad, 1).is_err());
}

#[test]
fn few_label_sampling() {
    let ds = generate_synthetic(&SynthSpec::two_modality(6, 2, 5, 2, 8), 6).unwrap();
    let sel = sample_few_labels(&ds, 2, 9).unwrap();
    assert_eq!(sel, sample_few_labels(&ds, 2, 9).unwrap());
    for (class, idx) in sel.labeled_indices.iter().enumerate() {
        assert_eq!(idx.len(), 2);
        assert!(idx.iter().all(|&k| ds.label(k) == Some(class)));
    }
    assert!(sample_few_labels(&ds, 0, 9).is_err());
    assert!((labeling_rate(1, 6, 1714) - 0.0035).abs() < 5e-5);

    let without_four: Vec<usize> = (0..ds.len()).filter(|&k| ds.label(k) != Some(4)).collect();
    match sample_few_labels(&ds.subset(&without_four), 1, 9) {
        Err(Error::InsufficientLabels { class, .. }) => assert_eq!(class, 4),
        other => panic!("expected class 4 to be reported, got {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_datasets_are_well_formed(
        classes in 2usize..5,
        users in 1usize..4,
        spuc in 1usize..4,
        channels in 1usize..4,
        timesteps in 8usize..24,
        noise in 0.0f64..0.5,
        corr in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let mut spec = SynthSpec::two_modality(classes, users, spuc, channels, timesteps);
        spec.noise_sigma = noise;
        spec.correlation_strength = corr;
        let ds = generate_synthetic(&spec, seed).unwrap();
        prop_assert!(validate_paired(&ds).is_empty());
        prop_assert_eq!(ds.len(), classes * users * spuc);
    }

    #[test]
    fn splits_partition_samples(users in 2usize..8, seed in any::<u64>(), cut in 1usize..7) {
        let ds = generate_synthetic(&SynthSpec::two_modality(3, users, 3, 1, 8), 1).unwrap();
        let cut = cut.min(users - 1) as u32;
        let train: BTreeSet<u32> = (0..cut).collect();
        let eval: BTreeSet<u32> = (cut..users as u32).collect();
        let split = split_by_user(&ds, &train, &eval, seed).unwrap();
        prop_assert_eq!(split.train.len() + split.validation.len() + split.test.len(), ds.len());
        // every window appears exactly once: compare multisets of raw data
        let mut all: Vec<Vec<u64>> = [&split.train, &split.validation, &split.test]
            .iter()
            .flat_map(|d| d.windows[0].iter().map(|w| w.data.iter().map(|v| v.to_bits()).collect()))
            .collect();
        let mut original: Vec<Vec<u64>> = ds.windows[0].iter().map(|w| w.data.iter().map(|v| v.to_bits()).collect()).collect();
        all.sort();
        original.sort();
        prop_assert_eq!(all, original);
    }

    #[test]
    fn few_label_sets_are_disjoint(n in 1usize..4, seed in any::<u64>()) {
        let ds = generate_synthetic(&SynthSpec::two_modality(4, 2, 4, 1, 8), 2).unwrap();
        let sel = sample_few_labels(&ds, n, seed).unwrap();
        let all = sel.indices();
        let unique: BTreeSet<usize> = all.iter().copied().collect();
        prop_assert_eq!(unique.len(), all.len());
        prop_assert_eq!(all.len(), n * 4);
    }
}

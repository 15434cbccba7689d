//! Generate a synthetic two-sensor dataset, check it, split it by user, draw
//! one label per class and write the CSV layout.
//!
//! cargo run --example synthetic_data -- [out_dir]

use std::path::PathBuf;

use mesen::data::{
    generate_synthetic, partition_users, sample_few_labels, samples_per_user, split_by_user,
    write_csv_layout, SynthSpec,
};
use mesen::validate_paired;

fn main() -> mesen::Result<()> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .map_or_else(|| std::env::temp_dir().join("mesen-synthetic"), PathBuf::from);

    let mut spec = SynthSpec::two_modality(6, 8, 10, 3, 32);
    spec.correlation_strength = 0.9;
    let ds = generate_synthetic(&spec, 42)?;
    println!(
        "{} paired windows over modalities {:?}, {} violations",
        ds.len(),
        ds.modalities,
        validate_paired(&ds).len()
    );
    println!("windows per user: {:?}", samples_per_user(&ds));

    let (train_users, eval_users) = partition_users(&ds, 0.25);
    let split = split_by_user(&ds, &train_users, &eval_users, 42)?;
    println!(
        "train {} / validation {} / test {}",
        split.train.len(),
        split.validation.len(),
        split.test.len()
    );

    let labels = sample_few_labels(&split.train, 1, 42)?;
    println!(
        "labeled windows {:?}, labeling rate {:.2}%",
        labels.indices(),
        labels.labeling_rate * 100.0
    );

    write_csv_layout(&ds, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}

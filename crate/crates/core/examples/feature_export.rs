//! Export projector features of a pretrained checkpoint for external
//! embedding tools and report how well they cluster by class.

use mesen::data::{generate_synthetic, SynthSpec};
use mesen::eval::{export_features, projector_features};
use mesen::pipeline::pretrain;
use mesen::default_config;

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn main() -> mesen::Result<()> {
    let mut spec = SynthSpec::two_modality(4, 4, 10, 2, 32);
    spec.noise_sigma = 0.0;
    let ds = generate_synthetic(&spec, 11)?;

    let mut config = default_config(4, 16)?;
    config.encoder_width = 16;
    config.epochs_pretrain = 10;
    config.pretrain_batch = 32;
    let ckpt = pretrain(&ds.without_labels(), &config)?;

    let out = std::env::temp_dir().join("mesen-features-acc.csv");
    export_features(&ckpt, &ds, "acc", &out)?;
    println!("wrote {} rows to {}", ds.len(), out.display());

    let feats = projector_features(&ckpt, &ds, "acc")?;
    let (mut within, mut between) = ((0.0, 0usize), (0.0, 0usize));
    for i in 0..ds.len() {
        for j in i + 1..ds.len() {
            let s = cosine(feats.row(i), feats.row(j));
            let bucket = if ds.label(i) == ds.label(j) { &mut within } else { &mut between };
            bucket.0 += s;
            bucket.1 += 1;
        }
    }
    println!(
        "mean cosine similarity: within class {:.4}, between classes {:.4}",
        within.0 / within.1 as f64,
        between.0 / between.1 as f64
    );
    Ok(())
}

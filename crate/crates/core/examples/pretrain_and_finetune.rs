//! Full pipeline on synthetic data: pretrain on unlabeled pairs, save and
//! reload the checkpoint, fine-tune each modality's encoder with one label
//! per class, and compare against training from scratch.

use mesen::data::{generate_synthetic, partition_users, sample_few_labels, split_by_user, SynthSpec};
use mesen::eval::{evaluate, write_loss_history};
use mesen::nets::Checkpoint;
use mesen::pipeline::{finetune, pretrain_with, train_supervised_baseline, PretrainVariant};
use mesen::default_config;

fn main() -> mesen::Result<()> {
    let ds = generate_synthetic(&SynthSpec::two_modality(6, 8, 20, 3, 32), 3)?;
    let (train_users, test_users) = partition_users(&ds, 0.25);
    let split = split_by_user(&ds, &train_users, &test_users, 3)?;

    let mut config = default_config(6, 32)?;
    config.encoder_width = 16;
    config.epochs_pretrain = 15;
    config.epochs_finetune = 100;
    config.pretrain_batch = 64;
    // Above 1/ln 2 the aligning loss stays positive and the loss balance
    // stays bounded.
    config.tau_hat = 2.0;

    let ckpt = pretrain_with(
        &split.train.without_labels(),
        &config,
        PretrainVariant::Mesen,
        |e| {
            println!(
                "epoch {:>2}: l_cmf {:.4} l_mpc {:.4} l_pr {:.4} l_pt {:.4}",
                e.epoch, e.l_cmf, e.l_mpc, e.l_pr, e.l_pt
            )
        },
    )?;
    println!("final usage entropy {:.4} (max {:.4})", ckpt.final_epoch_usage_entropy().unwrap_or(f64::NAN), (6f64).ln());

    let dir = std::env::temp_dir();
    let path = dir.join("mesen-example-checkpoint.json");
    ckpt.save(&path)?;
    let ckpt = Checkpoint::load(&path)?;
    write_loss_history(&ckpt.loss_history, &dir.join("mesen-example-losses.csv"))?;

    let labels = sample_few_labels(&split.train, 1, 3)?;
    for modality in &ds.modalities {
        let tuned = finetune(&ckpt, modality, &split.train, &labels, &config)?;
        let scratch = train_supervised_baseline(modality, &split.train, &labels, &config)?.model;
        let a = evaluate(&tuned, &split.test, modality)?;
        let b = evaluate(&scratch, &split.test, modality)?;
        println!(
            "{modality}: pretrained acc {:.3} macro F1 {:.3} | from scratch acc {:.3} macro F1 {:.3}",
            a.accuracy, a.macro_f1, b.accuracy, b.macro_f1
        );
    }
    Ok(())
}

//! Effect of the layer-weighted fine-tuning penalty: sweep its weight and
//! the per-layer schedule, and report how far the encoder drifts from its
//! pretrained values and how well it classifies.

use mesen::config::{gamma_linear, gamma_uniform};
use mesen::data::{generate_synthetic, partition_users, sample_few_labels, split_by_user, SynthSpec};
use mesen::eval::evaluate;
use mesen::losses::finetune_reg_anchored;
use mesen::nets::ENCODER_LAYERS;
use mesen::pipeline::{finetune, pretrain};
use mesen::{default_config, RegAnchor};

fn main() -> mesen::Result<()> {
    let ds = generate_synthetic(&SynthSpec::two_modality(6, 6, 12, 3, 32), 9)?;
    let (train_users, test_users) = partition_users(&ds, 0.34);
    let split = split_by_user(&ds, &train_users, &test_users, 9)?;

    let mut config = default_config(6, 32)?;
    config.encoder_width = 16;
    config.epochs_pretrain = 10;
    config.epochs_finetune = 80;
    config.pretrain_batch = 48;
    config.reg_anchor = RegAnchor::Checkpoint;
    let ckpt = pretrain(&split.train.without_labels(), &config)?;
    let pretrained = &ckpt.modality("acc")?.encoder;
    let labels = sample_few_labels(&split.train, 2, 9)?;

    let schedules = [
        ("uniform", gamma_uniform(ENCODER_LAYERS)),
        ("linear", gamma_linear(ENCODER_LAYERS)),
    ];
    for (name, gamma) in &schedules {
        for lambda in [0.0, 1e-3, 1e-1, 10.0] {
            let mut c = config.clone();
            c.gamma = gamma.clone();
            c.lambda_fr = lambda;
            let model = finetune(&ckpt, "acc", &split.train, &labels, &c)?;
            let drift = finetune_reg_anchored(
                &model.encoder,
                &model.head,
                &gamma_uniform(ENCODER_LAYERS),
                Some(pretrained),
            )? - model.head.sum_squares();
            let m = evaluate(&model, &split.test, "acc")?;
            println!(
                "gamma {name:<7} lambda {lambda:<6} drift {drift:.5}  acc {:.3}  macro F1 {:.3}",
                m.accuracy, m.macro_f1
            );
        }
    }
    Ok(())
}

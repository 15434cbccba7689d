//! Multimodal contrastive pretraining for few-label sensor activity
//! recognition.
//!
//! Per-modality encoders are pretrained on unlabeled, time-aligned windows
//! from two or more sensors with a cross-modal contrastive loss and a
//! pseudo-classification alignment loss. One encoder is then fine-tuned with
//! a handful of labels per class under a layer-weighted parameter penalty.
//!
//! ```no_run
//! use mesen::data::{generate_synthetic, sample_few_labels, split_by_user, partition_users, SynthSpec};
//! use mesen::{default_config, eval::evaluate, pipeline};
//!
//! # fn main() -> mesen::Result<()> {
//! let ds = generate_synthetic(&SynthSpec::two_modality(6, 10, 40, 3, 32), 7)?;
//! let (train_users, test_users) = partition_users(&ds, 0.3);
//! let split = split_by_user(&ds, &train_users, &test_users, 7)?;
//! let config = default_config(6, 32)?;
//! let ckpt = pipeline::pretrain(&split.train.without_labels(), &config)?;
//! let labels = sample_few_labels(&split.train, 1, 7)?;
//! let model = pipeline::finetune(&ckpt, "acc", &split.train, &labels, &config)?;
//! println!("{:?}", evaluate(&model, &split.test, "acc")?);
//! # Ok(())
//! # }
//! ```

pub mod config;
pub mod data;
mod error;
pub mod eval;
pub mod losses;
pub mod nets;
pub mod paired;
pub mod pipeline;
pub mod seed;

pub use config::{default_config, NormMode, RegAnchor, TrainConfig};
pub use error::{Error, Result};
pub use paired::{validate_paired, ModalityWindow, PairedDataset, Violation, ViolationField};

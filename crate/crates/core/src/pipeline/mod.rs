//! The two training stages: multimodal pretraining of per-modality encoders,
//! then few-label fine-tuning of one encoder with a fresh classifier head.

mod finetune;
mod optim;
mod pretrain;

use serde::{Deserialize, Serialize};

pub use finetune::{finetune, finetune_with_history, train_supervised_baseline, FitReport};
pub use optim::Adam;
pub use pretrain::{ablation_intra_negatives, pretrain, pretrain_variant, pretrain_with, EpochSummary};

use crate::losses::{Negatives, Objective};

/// Pretraining objective variants used by the method and its ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PretrainVariant {
    /// Cross-modal contrast plus balanced pseudo-class alignment.
    Mesen,
    /// As `Mesen`, with same-modality negatives in the contrastive denominator.
    IntraNegatives,
    /// Cross-modal contrast alone.
    CmfOnly,
    /// Pseudo-class alignment alone.
    MpcOnly,
    /// As `Mesen` with the usage-entropy weight treated as zero.
    NoEntropy,
}

impl PretrainVariant {
    pub fn objective(self) -> Objective {
        let full = Objective::FULL;
        match self {
            PretrainVariant::Mesen => full,
            PretrainVariant::IntraNegatives => Objective {
                negatives: Negatives::InterAndIntra,
                ..full
            },
            PretrainVariant::CmfOnly => Objective {
                align: false,
                ..full
            },
            PretrainVariant::MpcOnly => Objective {
                contrast: false,
                ..full
            },
            PretrainVariant::NoEntropy => Objective {
                entropy: false,
                ..full
            },
        }
    }
}

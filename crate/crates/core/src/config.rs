//! Training hyperparameters and their on-disk form.
//!
//! The config file is a flat TOML document. Every key is optional and
//! overrides the corresponding default; unknown keys are rejected so that a
//! typo never silently falls back to a default.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::ENCODER_LAYERS;

/// How projector outputs are mapped onto the contrastive feature space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    /// Divide each row by its Euclidean norm.
    RowL2,
    /// Standardize each feature over the batch, then divide each row by its norm.
    BatchStandardize,
}

/// What the layer-aware fine-tuning penalty pulls the parameters toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegAnchor {
    /// Squared norm of the parameters themselves.
    Zero,
    /// Squared distance of encoder parameters from their pretrained values.
    Checkpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub tau: f64,
    pub tau_hat: f64,
    pub alpha: f64,
    pub beta: f64,
    pub lambda_pr: f64,
    pub lambda_fr: f64,
    pub gamma: Vec<f64>,
    pub pretrain_batch: usize,
    pub finetune_batch: usize,
    pub learning_rate: f64,
    pub class_count: usize,
    pub feature_dim: usize,
    pub encoder_width: usize,
    pub encoder_kernel: usize,
    pub epochs_pretrain: usize,
    pub epochs_finetune: usize,
    pub seed: u64,
    pub repetitions: usize,
    pub norm_mode: NormMode,
    pub normalize_pseudo_columns: bool,
    pub reg_anchor: RegAnchor,
}

/// Constant per-layer weights, the plain weight-decay special case.
pub fn gamma_uniform(layers: usize) -> Vec<f64> {
    vec![1.0; layers]
}

/// Weights rising linearly with depth, `gamma_i = i / n_e`.
pub fn gamma_linear(layers: usize) -> Vec<f64> {
    (1..=layers).map(|i| i as f64 / layers as f64).collect()
}

pub fn default_config(class_count: usize, feature_dim: usize) -> Result<TrainConfig> {
    if class_count < 2 {
        return Err(Error::Config(format!(
            "class_count must be at least 2, got {class_count}"
        )));
    }
    if feature_dim < 2 {
        return Err(Error::Config(format!(
            "feature_dim must be at least 2, got {feature_dim}"
        )));
    }
    let config = TrainConfig {
        tau: 0.1,
        tau_hat: 1.0,
        alpha: 0.5,
        beta: 0.5,
        lambda_pr: -1.0,
        lambda_fr: 1e-3,
        gamma: gamma_uniform(ENCODER_LAYERS),
        pretrain_batch: 128,
        finetune_batch: 64,
        learning_rate: 1e-3,
        class_count,
        feature_dim,
        encoder_width: 32,
        encoder_kernel: 5,
        epochs_pretrain: 200,
        epochs_finetune: 200,
        seed: 0,
        repetitions: 5,
        norm_mode: NormMode::RowL2,
        normalize_pseudo_columns: true,
        reg_anchor: RegAnchor::Zero,
    };
    config.validate()?;
    Ok(config)
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        let positive = [
            ("tau", self.tau),
            ("tau_hat", self.tau_hat),
            ("learning_rate", self.learning_rate),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return fail(format!(
                "alpha and beta must be nonnegative, got {} and {}",
                self.alpha, self.beta
            ));
        }
        if (self.alpha + self.beta - 1.0).abs() > 1e-12 {
            return fail(format!(
                "alpha + beta must equal 1, got {}",
                self.alpha + self.beta
            ));
        }
        if !(self.lambda_pr < 0.0 && self.lambda_pr.is_finite()) {
            return fail(format!("lambda_pr must be negative, got {}", self.lambda_pr));
        }
        if !(self.lambda_fr >= 0.0 && self.lambda_fr.is_finite()) {
            return fail(format!(
                "lambda_fr must be nonnegative, got {}",
                self.lambda_fr
            ));
        }
        if self.gamma.len() != ENCODER_LAYERS {
            return fail(format!(
                "gamma needs one weight per encoder layer ({ENCODER_LAYERS}), got {}",
                self.gamma.len()
            ));
        }
        if let Some(g) = self.gamma.iter().find(|g| !(**g >= 0.0 && g.is_finite())) {
            return fail(format!("gamma entries must be nonnegative, got {g}"));
        }
        let counts = [
            ("pretrain_batch", self.pretrain_batch),
            ("finetune_batch", self.finetune_batch),
            ("repetitions", self.repetitions),
            ("encoder_width", self.encoder_width),
            ("encoder_kernel", self.encoder_kernel),
        ];
        for (name, v) in counts {
            if v == 0 {
                return fail(format!("{name} must be positive"));
            }
        }
        if self.class_count < 2 {
            return fail(format!("class_count must be at least 2, got {}", self.class_count));
        }
        if self.feature_dim < 2 {
            return fail(format!("feature_dim must be at least 2, got {}", self.feature_dim));
        }
        Ok(())
    }

    /// Apply the keys present in a TOML document on top of `self`.
    pub fn merge_toml(&self, text: &str) -> Result<TrainConfig> {
        let overrides: ConfigOverrides =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim().to_owned()))?;
        let mut c = self.clone();
        overrides.apply(&mut c);
        c.validate()?;
        Ok(c)
    }

    /// Parse a complete or partial document over the defaults implied by
    /// its `class_count` and `feature_dim` keys (6 and 64 when absent).
    pub fn from_toml(text: &str) -> Result<TrainConfig> {
        let overrides: ConfigOverrides =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim().to_owned()))?;
        let mut c = default_config(
            overrides.class_count.unwrap_or(6),
            overrides.feature_dim.unwrap_or(64),
        )?;
        overrides.apply(&mut c);
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<TrainConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TrainConfig::from_toml(&text)
    }
}

macro_rules! overrides {
    ($($field:ident : $ty:ty),* $(,)?) => {
        #[derive(Debug, Default, Deserialize)]
        #[serde(deny_unknown_fields)]
        struct ConfigOverrides {
            $($field: Option<$ty>,)*
        }

        impl ConfigOverrides {
            fn apply(self, c: &mut TrainConfig) {
                $(if let Some(v) = self.$field { c.$field = v; })*
            }
        }
    };
}

overrides! {
    tau: f64,
    tau_hat: f64,
    alpha: f64,
    beta: f64,
    lambda_pr: f64,
    lambda_fr: f64,
    gamma: Vec<f64>,
    pretrain_batch: usize,
    finetune_batch: usize,
    learning_rate: f64,
    class_count: usize,
    feature_dim: usize,
    encoder_width: usize,
    encoder_kernel: usize,
    epochs_pretrain: usize,
    epochs_finetune: usize,
    seed: u64,
    repetitions: usize,
    norm_mode: NormMode,
    normalize_pseudo_columns: bool,
    reg_anchor: RegAnchor,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_training_protocol() {
        let c = default_config(6, 128).unwrap();
        assert_eq!(c.learning_rate, 0.001);
        assert_eq!(c.pretrain_batch, 128);
        assert_eq!(c.finetune_batch, 64);
        assert_eq!(c.repetitions, 5);
        let c = default_config(2, 8).unwrap();
        assert_eq!((c.alpha, c.beta), (0.5, 0.5));
    }

    #[test]
    fn degenerate_class_count_rejected() {
        assert!(default_config(1, 8).is_err());
        assert!(default_config(6, 1).is_err());
    }

    #[test]
    fn invalid_fields_rejected() {
        let base = default_config(6, 16).unwrap();
        let cases: Vec<Box<dyn Fn(&mut TrainConfig)>> = vec![
            Box::new(|c| c.lambda_pr = 0.0),
            Box::new(|c| c.lambda_pr = 0.5),
            Box::new(|c| c.tau = 0.0),
            Box::new(|c| c.tau_hat = -1.0),
            Box::new(|c| c.lambda_fr = -1e-3),
            Box::new(|c| c.gamma[1] = -0.1),
            Box::new(|c| c.gamma.push(1.0)),
            Box::new(|c| c.alpha = 0.6),
        ];
        for mutate in cases {
            let mut c = base.clone();
            mutate(&mut c);
            assert!(c.validate().is_err(), "{c:?}");
        }
        let mut c = base.clone();
        c.alpha = 0.25;
        c.beta = 0.75;
        c.validate().unwrap();
    }

    #[test]
    fn toml_round_trip_and_unknown_keys() {
        let c = default_config(6, 16).unwrap();
        let back = TrainConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(c, back);

        let partial = TrainConfig::from_toml("class_count = 4\ntau = 0.2\n").unwrap();
        assert_eq!(partial.class_count, 4);
        assert_eq!(partial.tau, 0.2);
        assert_eq!(partial.tau_hat, 1.0);

        let err = TrainConfig::from_toml("tua = 0.2\n").unwrap_err();
        assert!(err.to_string().contains("tua"), "{err}");
        assert!(TrainConfig::from_toml("lambda_pr = 1.0\n").is_err());
    }

    #[test]
    fn gamma_schedules() {
        assert_eq!(gamma_uniform(3), vec![1.0, 1.0, 1.0]);
        assert_eq!(gamma_linear(4), vec![0.25, 0.5, 0.75, 1.0]);
    }
}

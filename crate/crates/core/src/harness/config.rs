use serde::{Deserialize, Serialize};

use crate::data::{AugmentConfig, SegmentConfig};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, Variant};
use crate::util::sha256_hex;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub variant: Variant,
    pub lr: f64,
    /// Defaults to the variant's batch size when absent.
    pub batch_size: Option<usize>,
    pub max_epochs: usize,
    /// Epochs without validation-loss improvement before stopping.
    pub patience: usize,
    /// Share of each training subject's segments held out for validation.
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: Variant::Banet,
            lr: 0.003,
            batch_size: None,
            max_epochs: 50,
            patience: 10,
            val_fraction: 0.2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn batch(&self) -> usize {
        self.batch_size.unwrap_or_else(|| self.variant.default_batch_size())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::usage(format!("learning rate {} must be non-negative", self.lr)));
        }
        if self.batch() == 0 || self.max_epochs == 0 {
            return Err(Error::usage("batch_size and max_epochs must be positive"));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::usage(format!("val_fraction {} must lie in [0, 1)", self.val_fraction)));
        }
        Ok(())
    }
}

/// Optional architecture overrides on top of the variant defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelOverrides {
    pub hidden: Option<usize>,
    pub lstm_layers: Option<usize>,
    pub dropout_p: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub model: ModelOverrides,
    pub segment: SegmentConfig,
    pub augment: AugmentConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Format(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.segment.validate()?;
        self.augment.validate()?;
        self.model_spec().validate()
    }

    pub fn model_spec(&self) -> ModelSpec {
        let mut spec = ModelSpec { window: self.segment.window, ..ModelSpec::new(self.train.variant) };
        if let Some(h) = self.model.hidden {
            spec.hidden = h;
        }
        if let Some(l) = self.model.lstm_layers {
            spec.lstm_layers = l;
        }
        if let Some(p) = self.model.dropout_p {
            spec.dropout_p = p;
        }
        spec
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serialises").as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_batch_sizes() {
        let c = TrainConfig::default();
        assert_eq!(c.lr, 0.003);
        assert_eq!(c.batch(), 40);
        assert_eq!(c.max_epochs, 50);
        assert_eq!(c.patience, 10);
        for (v, b) in [(Variant::ConvLstm, 50), (Variant::BiLstm, 40), (Variant::StackedLstm, 20)] {
            assert_eq!(TrainConfig { variant: v, ..c.clone() }.batch(), b);
        }
    }

    #[test]
    fn toml_round_trip_and_unknown_keys() {
        let text = "[train]\nvariant = \"stacked-lstm\"\nmax_epochs = 3\n[augment]\nenabled = false\n";
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.train.variant, Variant::StackedLstm);
        assert_eq!(cfg.train.max_epochs, 3);
        assert!(!cfg.augment.enabled);
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert!(ExperimentConfig::from_toml("[train]\nlearning_rate = 0.1\n").is_err());
        assert!(ExperimentConfig::from_toml("bogus = 1\n").is_err());
        assert!(ExperimentConfig::from_toml("[train]\nlr = -1.0\n").is_err());
        assert_ne!(cfg.hash(), ExperimentConfig::default().hash());
        assert_eq!(cfg.hash(), cfg.clone().hash());
    }

    #[test]
    fn overrides_reach_the_spec() {
        let cfg = ExperimentConfig::from_toml("[model]\nhidden = 4\ndropout_p = 0.0\n[segment]\nwindow = 60\n").unwrap();
        let spec = cfg.model_spec();
        assert_eq!((spec.hidden, spec.dropout_p, spec.window), (4, 0.0, 60));
    }
}

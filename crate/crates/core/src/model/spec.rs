use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Conv1x1Params, DenseParams, LstmLayerParams};

/// Conv-LSTM front end: temporal kernel length, filter count and pool width.
pub const CONV_KERNEL: usize = 10;
pub const CONV_FILTERS: usize = 10;
pub const CONV_POOL: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Banet,
    BanetTime,
    BanetBody,
    BanetDense,
    BanetCompatible,
    StackedLstm,
    BiLstm,
    ConvLstm,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::Banet,
        Variant::BanetTime,
        Variant::BanetBody,
        Variant::BanetDense,
        Variant::BanetCompatible,
        Variant::StackedLstm,
        Variant::BiLstm,
        Variant::ConvLstm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Banet => "banet",
            Variant::BanetTime => "banet-time",
            Variant::BanetBody => "banet-body",
            Variant::BanetDense => "banet-dense",
            Variant::BanetCompatible => "banet-compatible",
            Variant::StackedLstm => "stacked-lstm",
            Variant::BiLstm => "bi-lstm",
            Variant::ConvLstm => "conv-lstm",
        }
    }

    /// Whether a forward pass emits an attention record.
    pub fn has_attention(self) -> bool {
        !matches!(self, Variant::StackedLstm | Variant::BiLstm | Variant::ConvLstm)
    }

    pub fn has_body_attention(self) -> bool {
        matches!(self, Variant::Banet | Variant::BanetBody | Variant::BanetDense | Variant::BanetCompatible)
    }

    /// Mini-batch size used for this architecture in the comparison experiments.
    pub fn default_batch_size(self) -> usize {
        match self {
            Variant::ConvLstm => 50,
            Variant::StackedLstm => 20,
            _ => 40,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Variant::ALL.iter().map(|v| v.name()).collect();
                Error::usage(format!("unknown variant `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

/// Architecture description; together with a seed it fully determines a fresh model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub variant: Variant,
    /// Body parts `C`.
    pub parts: usize,
    /// Features per part (angle, energy).
    pub features_per_part: usize,
    /// Window length `T` in samples.
    pub window: usize,
    /// Hidden units per LSTM layer (per direction for bi-lstm).
    pub hidden: usize,
    pub lstm_layers: usize,
    pub dropout_p: f64,
    pub classes: usize,
}

impl ModelSpec {
    /// Full-scale defaults for `variant`.
    pub fn new(variant: Variant) -> Self {
        let (hidden, lstm_layers) = match variant {
            Variant::StackedLstm => (28, 3),
            Variant::BiLstm => (14, 3),
            Variant::ConvLstm => (28, 1),
            _ => (8, 3),
        };
        ModelSpec {
            variant,
            parts: 13,
            features_per_part: 2,
            window: 180,
            hidden,
            lstm_layers,
            dropout_p: 0.5,
            classes: 2,
        }
    }

    /// Desk-scale variant used for gradient checks: `T = 12`, `K = 4`.
    pub fn reduced(variant: Variant) -> Self {
        ModelSpec {
            window: 12,
            hidden: 4,
            ..ModelSpec::new(variant)
        }
    }

    pub fn input_dim(&self) -> usize {
        self.parts * self.features_per_part
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("parts", self.parts),
            ("features_per_part", self.features_per_part),
            ("window", self.window),
            ("hidden", self.hidden),
            ("lstm_layers", self.lstm_layers),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::usage(format!("model spec field `{name}` must be positive")));
        }
        if self.classes < 2 {
            return Err(Error::usage("a classifier needs at least two classes"));
        }
        if !(0.0..=1.0).contains(&self.dropout_p) {
            return Err(Error::usage(format!("dropout probability {} outside [0, 1]", self.dropout_p)));
        }
        if self.variant == Variant::ConvLstm && self.window < CONV_KERNEL + CONV_POOL - 1 {
            return Err(Error::usage(format!(
                "conv-lstm needs a window of at least {} samples",
                CONV_KERNEL + CONV_POOL - 1
            )));
        }
        Ok(())
    }

    /// Trainable scalar count from the closed-form layer formulas.
    pub fn formula_param_count(&self) -> usize {
        let (c, k, t) = (self.parts, self.hidden, self.window);
        let stack = |input: usize| -> usize {
            (0..self.lstm_layers)
                .map(|l| LstmLayerParams::count(if l == 0 { input } else { k }, k))
                .sum()
        };
        let body = 2 * DenseParams::count(c, c);
        let classifier = |inputs: usize| DenseParams::count(inputs, self.classes);
        match self.variant {
            Variant::Banet => stack(self.features_per_part) + c * Conv1x1Params::count(k) + body + classifier(k * c),
            Variant::BanetTime => stack(self.features_per_part) + c * Conv1x1Params::count(k) + classifier(k * c),
            Variant::BanetBody => stack(self.features_per_part) + Conv1x1Params::count(k) + body + classifier(k * c),
            Variant::BanetDense => stack(self.features_per_part) + DenseParams::count(t * k, t) + body + classifier(k * c),
            Variant::BanetCompatible => stack(self.input_dim()) + body + Conv1x1Params::count(k) + classifier(k * c),
            Variant::StackedLstm => stack(self.input_dim()) + classifier(k),
            Variant::BiLstm => {
                (0..self.lstm_layers)
                    .map(|l| 2 * LstmLayerParams::count(if l == 0 { self.input_dim() } else { 2 * k }, k))
                    .sum::<usize>()
                    + classifier(2 * k)
            }
            Variant::ConvLstm => {
                CONV_FILTERS * CONV_KERNEL + CONV_FILTERS + {
                    let feat = CONV_FILTERS * self.input_dim();
                    (0..self.lstm_layers)
                        .map(|l| LstmLayerParams::count(if l == 0 { feat } else { k }, k))
                        .sum::<usize>()
                } + classifier(k)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
            assert_eq!(serde_json::to_string(&v).unwrap(), format!("\"{}\"", v.name()));
        }
        assert!("banet-deluxe".parse::<Variant>().is_err());
    }

    #[test]
    fn reported_parameter_sizes() {
        let count = |v| ModelSpec::new(v).formula_param_count();
        assert_eq!(count(Variant::Banet), 2131);
        assert_eq!(count(Variant::BanetTime), 1767);
        assert_eq!(count(Variant::BanetBody), 2023);
        assert_eq!(count(Variant::StackedLstm), 18986);
        assert_eq!(count(Variant::BiLstm), 14282);
    }

    #[test]
    fn validation() {
        assert!(ModelSpec::new(Variant::Banet).validate().is_ok());
        let bad = ModelSpec { dropout_p: 1.5, ..ModelSpec::new(Variant::Banet) };
        assert!(bad.validate().is_err());
        let bad = ModelSpec { window: 5, ..ModelSpec::new(Variant::ConvLstm) };
        assert!(bad.validate().is_err());
        let bad = ModelSpec { hidden: 0, ..ModelSpec::new(Variant::Banet) };
        assert!(bad.validate().is_err());
    }
}

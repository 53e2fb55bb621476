use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which architecture the harness instantiates: the full model or one of
/// the component-replacement / component-removal variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    /// STCN + SeqMask attention.
    Original,
    /// SeqMask replaced by plain scaled dot-product attention.
    FullAttention,
    /// STCN replaced by an affine embedding plus a position-wise FFN.
    FfnForStcn,
    /// Attention sublayer removed.
    NoAttention,
    /// STCN replaced by a single affine embedding.
    NoStcn,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 5] = [
        AblationVariant::Original,
        AblationVariant::FullAttention,
        AblationVariant::FfnForStcn,
        AblationVariant::NoAttention,
        AblationVariant::NoStcn,
    ];

    /// Row label in the ablation grid: (temporal component, attention component).
    pub fn design_label(&self) -> (&'static str, &'static str) {
        match self {
            AblationVariant::Original => ("STCN", "SeqMask"),
            AblationVariant::FullAttention => ("STCN", "Full attention"),
            AblationVariant::FfnForStcn => ("FFN", "SeqMask"),
            AblationVariant::NoAttention => ("STCN", "w/o"),
            AblationVariant::NoStcn => ("w/o", "SeqMask"),
        }
    }
}

impl std::str::FromStr for AblationVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(AblationVariant::Original),
            "full_attention" => Ok(AblationVariant::FullAttention),
            "ffn_for_stcn" => Ok(AblationVariant::FfnForStcn),
            "no_attention" => Ok(AblationVariant::NoAttention),
            "no_stcn" => Ok(AblationVariant::NoStcn),
            other => Err(Error::config(format!("unknown ablation variant `{other}`"))),
        }
    }
}

/// How the SCN pads the variable axis to preserve its length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScnPadding {
    /// Wrap-around: the first k-1 positions are concatenated onto the end.
    Circular,
    /// Trailing zeros instead of wrap-around.
    Zero,
}

/// What feeds the mask MLPs inside each mask block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskSource {
    /// The value projection V = xW_V.
    Value,
    /// The block input x itself (the embedding produced by STCN).
    Stcn,
}

/// All model dimensions and architectural knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Number of variables M.
    pub variables: usize,
    /// Lookback length T.
    pub lookback: usize,
    /// Forecast horizon K.
    pub horizon: usize,
    /// Embedding size F (= d_k = d_model). Must be even.
    pub embed: usize,
    /// SCN channel count d_s.
    pub scn_channels: usize,
    /// Mask hidden width d_a. 0 means the default 2*embed.
    pub mask_hidden: usize,
    /// FFN hidden width d_ff. 0 means the default 2*embed.
    pub ffn_hidden: usize,
    /// Mask block count n.
    pub mask_blocks: usize,
    /// sTransformer block count.
    pub blocks: usize,
    /// TCN layer count; dilations double per layer starting at 1.
    pub tcn_layers: usize,
    /// TCN kernel width.
    pub tcn_kernel: usize,
    /// SCN kernel width per layer (clamped to <= variables at build time).
    pub scn_kernels: Vec<usize>,
    pub dropout: f64,
    pub variant: AblationVariant,
    pub scn_padding: ScnPadding,
    pub mask_source: MaskSource,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variables: 7,
            lookback: 96,
            horizon: 96,
            embed: 64,
            scn_channels: 32,
            mask_hidden: 0,
            ffn_hidden: 0,
            mask_blocks: 1,
            blocks: 2,
            tcn_layers: 3,
            tcn_kernel: 3,
            scn_kernels: vec![3, 5],
            dropout: 0.0,
            variant: AblationVariant::Original,
            scn_padding: ScnPadding::Circular,
            mask_source: MaskSource::Value,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn d_a(&self) -> usize {
        if self.mask_hidden == 0 {
            2 * self.embed
        } else {
            self.mask_hidden
        }
    }

    pub fn d_ff(&self) -> usize {
        if self.ffn_hidden == 0 {
            2 * self.embed
        } else {
            self.ffn_hidden
        }
    }

    /// SCN kernel widths actually used: schedule entries clamped to the
    /// variable-axis length (univariate data forces width 1).
    pub fn scn_kernels_clamped(&self) -> Vec<usize> {
        self.scn_kernels
            .iter()
            .map(|&k| k.max(1).min(self.variables.max(1)))
            .collect()
    }

    /// Block input width: the first block consumes the lookback window,
    /// deeper blocks consume the F-dimensional running representation.
    pub fn block_input_width(&self, block: usize) -> usize {
        if block == 0 {
            self.lookback
        } else {
            self.embed
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("variables", self.variables),
            ("lookback", self.lookback),
            ("horizon", self.horizon),
            ("embed", self.embed),
            ("scn_channels", self.scn_channels),
            ("mask_blocks", self.mask_blocks),
            ("blocks", self.blocks),
            ("tcn_layers", self.tcn_layers),
            ("tcn_kernel", self.tcn_kernel),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("{name} must be >= 1, got 0")));
            }
        }
        if self.embed % 2 != 0 {
            return Err(Error::config(format!(
                "embed must be even (the STCN concatenates two F/2 branches), got {}",
                self.embed
            )));
        }
        if self.scn_kernels.is_empty() {
            return Err(Error::config("scn_kernels must list at least one layer"));
        }
        if self.scn_kernels.iter().any(|&k| k == 0) {
            return Err(Error::config("scn_kernels entries must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        ModelConfig::default().validate().unwrap();
    }

    #[test]
    fn odd_embed_rejected() {
        let cfg = ModelConfig {
            embed: 63,
            ..ModelConfig::default()
        };
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("even"), "{msg}");
    }

    #[test]
    fn univariate_clamps_scn_kernels_to_one() {
        let cfg = ModelConfig {
            variables: 1,
            ..ModelConfig::default()
        };
        assert_eq!(cfg.scn_kernels_clamped(), vec![1, 1]);
    }
}

//! Run configuration file: TOML with strict keys.
//!
//! A run file selects the model family and numeric precision, optionally
//! overrides the preset architecture, applies ablation rows in order, and
//! carries the frontend and SpecAugment policies. Unknown keys anywhere are
//! rejected with the offending key named.

use serde::{Deserialize, Serialize};

use conformer_core::error::{Error, Result};
use conformer_core::frontend::{FeatureConfig, SpecAugmentConfig};
use conformer_core::model::{apply_ablation, ConformerConfig, ContextNetConfig, Preset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Conformer,
    ContextNet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecisionKind {
    #[default]
    F64,
    F32,
}

/// `[conformer]` table: preset plus optional overrides and ablation rows.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConformerSection {
    pub preset: Option<String>,
    pub num_layers: Option<usize>,
    pub d_model: Option<usize>,
    pub num_heads: Option<usize>,
    pub conv_kernel: Option<usize>,
    pub dropout: Option<f64>,
    pub ablation: Vec<String>,
}

impl ConformerSection {
    /// Preset named in the file, if any.
    pub fn named_preset(&self) -> Result<Option<Preset>> {
        self.preset.as_deref().map(Preset::parse).transpose()
    }

    /// Materialize the architecture: preset (default S), then field
    /// overrides, then ablation rows in file order.
    pub fn resolve(&self, n_mels: usize) -> Result<ConformerConfig> {
        let preset = self.named_preset()?.unwrap_or(Preset::S);
        let mut cfg = ConformerConfig::preset(preset);
        cfg.n_mels = n_mels;
        if let Some(v) = self.num_layers {
            cfg.num_layers = v;
        }
        if let Some(v) = self.d_model {
            cfg.d_model = v;
        }
        if let Some(v) = self.num_heads {
            cfg.num_heads = v;
        }
        if let Some(v) = self.conv_kernel {
            cfg.conv_kernel = v;
        }
        if let Some(v) = self.dropout {
            cfg.dropout = v;
        }
        for row in &self.ablation {
            cfg = apply_ablation(&cfg, row)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `[contextnet]` table: the standard 31-block architecture with a width
/// multiplier and optional windowed SE pooling.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContextNetSection {
    pub alpha: f64,
    pub se_window: Option<usize>,
}

impl Default for ContextNetSection {
    fn default() -> Self {
        ContextNetSection {
            alpha: 1.0,
            se_window: None,
        }
    }
}

impl ContextNetSection {
    pub fn resolve(&self, n_mels: usize) -> Result<ContextNetConfig> {
        let mut cfg = ContextNetConfig::standard();
        cfg.alpha = self.alpha;
        cfg.n_mels = n_mels;
        cfg.se_window = self.se_window;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// The whole run file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelKind,
    pub precision: PrecisionKind,
    pub conformer: ConformerSection,
    pub contextnet: ContextNetSection,
    pub frontend: FeatureConfig,
    pub specaugment: SpecAugmentConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("{}", e.message())))?;
        cfg.frontend.validate()?;
        cfg.specaugment.validate(cfg.frontend.n_mels)?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

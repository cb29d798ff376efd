//! Architectural configuration for both encoders, including the ablation
//! space expressed as named variant rows.

use crate::error::{Error, Result};
use crate::ops::Act;

use super::LIGHTWEIGHT_GROUPS;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Swish,
    Relu,
}

impl Activation {
    pub fn act(self) -> Act {
        match self {
            Activation::Swish => Act::Swish,
            Activation::Relu => Act::Relu,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FfnStyle {
    /// Two half-step feed-forward modules sandwiching the block.
    MacaronHalf,
    /// One feed-forward module after the attention/conv pair, full residual.
    Single,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PosEmb {
    Relative,
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvKindSpec {
    Depthwise,
    Lightweight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvPosition {
    AfterMhsa,
    BeforeMhsa,
    ParallelConcat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualScale {
    Half,
    Full,
}

/// Structural variant switches. The default reproduces the full block:
/// swish, conv on, macaron half-step FFNs, relative positions, depthwise
/// kernel, conv after attention, half residuals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AblationSpec {
    pub activation: Activation,
    pub conv_module: bool,
    pub ffn_style: FfnStyle,
    pub pos_emb: PosEmb,
    pub conv_kind: ConvKindSpec,
    pub conv_position: ConvPosition,
    pub residual: ResidualScale,
}

impl Default for AblationSpec {
    fn default() -> Self {
        AblationSpec {
            activation: Activation::Swish,
            conv_module: true,
            ffn_style: FfnStyle::MacaronHalf,
            pos_emb: PosEmb::Relative,
            conv_kind: ConvKindSpec::Depthwise,
            conv_position: ConvPosition::AfterMhsa,
            residual: ResidualScale::Half,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    S,
    M,
    L,
}

impl Preset {
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_uppercase().as_str() {
            "S" => Ok(Preset::S),
            "M" => Ok(Preset::M),
            "L" => Ok(Preset::L),
            other => Err(Error::Config(format!("unknown preset {other}, expected S, M, or L"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::S => "S",
            Preset::M => "M",
            Preset::L => "L",
        }
    }

    /// Decoder width paired with this encoder in the size table.
    pub fn decoder_dim(self) -> usize {
        match self {
            Preset::S => 320,
            Preset::M | Preset::L => 640,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConformerConfig {
    pub num_layers: usize,
    pub d_model: usize,
    pub num_heads: usize,
    pub conv_kernel: usize,
    pub ffn_expansion: usize,
    pub dropout: f64,
    pub ablation: AblationSpec,
    pub subsample_factor: usize,
    /// Input feature channels fed to the subsampling stem.
    pub n_mels: usize,
}

impl ConformerConfig {
    pub fn preset(p: Preset) -> Self {
        let (num_layers, d_model, num_heads, conv_kernel) = match p {
            Preset::S => (16, 144, 4, 32),
            Preset::M => (16, 256, 4, 32),
            Preset::L => (17, 512, 8, 32),
        };
        ConformerConfig {
            num_layers,
            d_model,
            num_heads,
            conv_kernel,
            ffn_expansion: 4,
            dropout: 0.1,
            ablation: AblationSpec::default(),
            subsample_factor: 4,
            n_mels: 80,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.num_heads == 0 {
            return Err(Error::Config("d_model and num_heads must be positive".into()));
        }
        if self.d_model % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by num_heads {}",
                self.d_model, self.num_heads
            )));
        }
        if self.conv_kernel == 0 {
            return Err(Error::Config("conv_kernel must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        if self.ffn_expansion == 0 {
            return Err(Error::Config("ffn_expansion must be at least 1".into()));
        }
        if self.subsample_factor != 4 {
            return Err(Error::Config(format!(
                "only subsample_factor 4 is implemented, got {}",
                self.subsample_factor
            )));
        }
        if self.n_mels < 7 {
            return Err(Error::Config(format!(
                "n_mels must be at least 7 for the subsampling stem, got {}",
                self.n_mels
            )));
        }
        if self.ablation.conv_position == ConvPosition::ParallelConcat && !self.ablation.conv_module
        {
            return Err(Error::Config(
                "parallel_concat placement requires the convolution module".into(),
            ));
        }
        if self.ablation.conv_kind == ConvKindSpec::Lightweight
            && self.d_model % LIGHTWEIGHT_GROUPS != 0
        {
            return Err(Error::Config(format!(
                "lightweight conv needs d_model divisible by {LIGHTWEIGHT_GROUPS}, got {}",
                self.d_model
            )));
        }
        Ok(())
    }
}

const HEAD_SWEEP: [usize; 4] = [4, 8, 16, 32];
const KERNEL_SWEEP: [usize; 5] = [3, 7, 17, 32, 65];

fn parse_swept(row: &str, prefix: &str, allowed: &[usize]) -> Option<Result<usize>> {
    let inner = row.strip_prefix(prefix)?.strip_suffix(')')?;
    Some(match inner.parse::<usize>() {
        Ok(n) if allowed.contains(&n) => Ok(n),
        Ok(n) => Err(Error::Config(format!(
            "{prefix}{n}) is not in the sweep {allowed:?}"
        ))),
        Err(_) => Err(Error::Config(format!("cannot parse sweep value in {row}"))),
    })
}

/// Return a copy of `cfg` with one named ablation row applied.
///
/// Rows: `relu`, `no_conv`, `single_ffn`, `abs_pos`, `lightweight`,
/// `conv_first`, `parallel`, `full_residual`, `heads(n)` with
/// n in {4, 8, 16, 32}, and `kernel(k)` with k in {3, 7, 17, 32, 65}.
pub fn apply_ablation(cfg: &ConformerConfig, row: &str) -> Result<ConformerConfig> {
    let mut out = cfg.clone();
    match row {
        "relu" => out.ablation.activation = Activation::Relu,
        "no_conv" => out.ablation.conv_module = false,
        "single_ffn" => out.ablation.ffn_style = FfnStyle::Single,
        "abs_pos" => out.ablation.pos_emb = PosEmb::Absolute,
        "lightweight" => out.ablation.conv_kind = ConvKindSpec::Lightweight,
        "conv_first" => out.ablation.conv_position = ConvPosition::BeforeMhsa,
        "parallel" => out.ablation.conv_position = ConvPosition::ParallelConcat,
        "full_residual" => out.ablation.residual = ResidualScale::Full,
        _ => {
            if let Some(n) = parse_swept(row, "heads(", &HEAD_SWEEP) {
                out.num_heads = n?;
            } else if let Some(k) = parse_swept(row, "kernel(", &KERNEL_SWEEP) {
                out.conv_kernel = k?;
            } else {
                return Err(Error::Config(format!("unknown ablation row {row}")));
            }
        }
    }
    Ok(out)
}

/// All named ablation rows, in table order. Used by verification sweeps.
pub fn ablation_rows() -> Vec<String> {
    let mut rows: Vec<String> = [
        "relu",
        "no_conv",
        "single_ffn",
        "abs_pos",
        "lightweight",
        "conv_first",
        "parallel",
        "full_residual",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    rows.extend(HEAD_SWEEP.iter().map(|n| format!("heads({n})")));
    rows.extend(KERNEL_SWEEP.iter().map(|k| format!("kernel({k})")));
    rows
}

/// One block of the SE-convolution encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContextNetBlockSpec {
    pub num_conv_layers: usize,
    pub out_channels: usize,
    pub filter_size: usize,
    pub stride: usize,
    pub se: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextNetConfig {
    /// Width multiplier applied to every internal channel count.
    pub alpha: f64,
    pub blocks: Vec<ContextNetBlockSpec>,
    /// Input feature channels.
    pub n_mels: usize,
    /// SE pooling window; `None` means global average pooling.
    pub se_window: Option<usize>,
}

impl ContextNetConfig {
    /// The standard 31-block layout: one entry block at 256 channels,
    /// stride-2 downsampling at blocks 4, 7, and 11, widening to 512 at
    /// block 11, and a single-layer 640-channel head.
    pub fn standard() -> Self {
        let mut blocks = vec![ContextNetBlockSpec {
            num_conv_layers: 1,
            out_channels: 256,
            filter_size: 5,
            stride: 1,
            se: true,
        }];
        for i in 1..=10 {
            blocks.push(ContextNetBlockSpec {
                num_conv_layers: 5,
                out_channels: 256,
                filter_size: 5,
                stride: if i == 4 || i == 7 { 2 } else { 1 },
                se: true,
            });
        }
        for i in 11..=29 {
            blocks.push(ContextNetBlockSpec {
                num_conv_layers: 5,
                out_channels: 512,
                filter_size: 5,
                stride: if i == 11 { 2 } else { 1 },
                se: true,
            });
        }
        blocks.push(ContextNetBlockSpec {
            num_conv_layers: 1,
            out_channels: 640,
            filter_size: 5,
            stride: 1,
            se: true,
        });
        ContextNetConfig {
            alpha: 1.0,
            blocks,
            n_mels: 80,
            se_window: None,
        }
    }

    /// Channel count of block `idx` after width scaling. The final block
    /// keeps its base width; all internal blocks scale as
    /// `round(alpha * base)`.
    pub fn scaled_channels(&self, idx: usize) -> usize {
        let base = self.blocks[idx].out_channels;
        if idx + 1 == self.blocks.len() {
            base
        } else {
            ((self.alpha * base as f64).round() as usize).max(1)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha <= 0.0 {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.blocks.is_empty() {
            return Err(Error::Config("block list must not be empty".into()));
        }
        if self.n_mels == 0 {
            return Err(Error::Config("n_mels must be positive".into()));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            if b.filter_size != 5 {
                return Err(Error::Config(format!(
                    "block {i}: filter size must be 5, got {}",
                    b.filter_size
                )));
            }
            if b.num_conv_layers == 0 {
                return Err(Error::Config(format!("block {i}: needs at least one conv layer")));
            }
            if b.out_channels == 0 {
                return Err(Error::Config(format!("block {i}: out_channels must be positive")));
            }
            if !(b.stride == 1 || b.stride == 2) {
                return Err(Error::Config(format!(
                    "block {i}: stride must be 1 or 2, got {}",
                    b.stride
                )));
            }
        }
        let downsamples = self.blocks.iter().filter(|b| b.stride == 2).count();
        if downsamples != 3 {
            return Err(Error::Config(format!(
                "exactly three stride-2 blocks are required, found {downsamples}"
            )));
        }
        if self.se_window == Some(0) {
            return Err(Error::Config("se_window must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_size_table() {
        let s = ConformerConfig::preset(Preset::S);
        assert_eq!(
            (s.num_layers, s.d_model, s.num_heads, s.conv_kernel),
            (16, 144, 4, 32)
        );
        let m = ConformerConfig::preset(Preset::M);
        assert_eq!((m.num_layers, m.d_model), (16, 256));
        let l = ConformerConfig::preset(Preset::L);
        assert_eq!(
            (l.num_layers, l.d_model, l.num_heads, l.conv_kernel),
            (17, 512, 8, 32)
        );
        assert!(s.validate().is_ok());
        assert!(l.validate().is_ok());
    }

    #[test]
    fn ablation_rows_change_one_field() {
        let base = ConformerConfig::preset(Preset::S);
        let relu = apply_ablation(&base, "relu").unwrap();
        assert_eq!(relu.ablation.activation, Activation::Relu);
        let mut expect = base.clone();
        expect.ablation.activation = Activation::Relu;
        assert_eq!(relu, expect);

        assert_eq!(apply_ablation(&base, "kernel(65)").unwrap().conv_kernel, 65);
        let l = ConformerConfig::preset(Preset::L);
        let h16 = apply_ablation(&l, "heads(16)").unwrap();
        assert_eq!(h16.d_model / h16.num_heads, 32);
        assert!(apply_ablation(&base, "bogus").is_err());
        assert!(apply_ablation(&base, "kernel(9)").is_err());
        assert!(apply_ablation(&base, "heads(3)").is_err());
    }

    #[test]
    fn ablation_is_idempotent_and_independent_rows_commute() {
        let base = ConformerConfig::preset(Preset::M);
        for row in ablation_rows() {
            let once = apply_ablation(&base, &row).unwrap();
            let twice = apply_ablation(&once, &row).unwrap();
            assert_eq!(once, twice, "row {row}");
        }
        let ab = apply_ablation(&apply_ablation(&base, "relu").unwrap(), "kernel(7)").unwrap();
        let ba = apply_ablation(&apply_ablation(&base, "kernel(7)").unwrap(), "relu").unwrap();
        assert_eq!(ab, ba);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = ConformerConfig::preset(Preset::S);
        cfg.num_heads = 5;
        assert!(cfg.validate().is_err());
        let mut cfg = ConformerConfig::preset(Preset::S);
        cfg.dropout = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ConformerConfig::preset(Preset::S);
        cfg.ablation.conv_position = ConvPosition::ParallelConcat;
        cfg.ablation.conv_module = false;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn standard_contextnet_table() {
        let cfg = ContextNetConfig::standard();
        assert_eq!(cfg.blocks.len(), 31);
        assert!(cfg.validate().is_ok());
        let strided: Vec<usize> = cfg
            .blocks
            .iter()
            .enumerate()
            .filter(|(_, b)| b.stride == 2)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(strided, [4, 7, 11]);
        assert_eq!(cfg.blocks[0].num_conv_layers, 1);
        assert_eq!(cfg.blocks[30].num_conv_layers, 1);
        assert_eq!(cfg.blocks[30].out_channels, 640);
        assert!(cfg.blocks[1..30].iter().all(|b| b.num_conv_layers == 5));
        assert!(cfg.blocks.iter().all(|b| b.filter_size == 5));
    }

    #[test]
    fn alpha_scales_internal_channels_only() {
        let mut cfg = ContextNetConfig::standard();
        cfg.alpha = 2.0;
        assert_eq!(cfg.scaled_channels(0), 512);
        assert_eq!(cfg.scaled_channels(11), 1024);
        assert_eq!(cfg.scaled_channels(30), 640);
        cfg.alpha = 0.5;
        assert_eq!(cfg.scaled_channels(0), 128);
    }
}

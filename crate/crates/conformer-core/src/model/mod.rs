//! Full encoder models: configuration and ablation space, block assembly,
//! parameter counting, and the learning-rate schedule.

pub mod config;
pub mod conformer;
pub mod contextnet;
pub mod count;
pub mod schedule;

pub use config::{
    AblationSpec, Activation, ConformerConfig, ContextNetBlockSpec, ContextNetConfig,
    ConvKindSpec, ConvPosition, FfnStyle, PosEmb, Preset, ResidualScale, ablation_rows,
    apply_ablation,
};
pub use conformer::{
    block_schema, conformer_block, conformer_schema, mount_block, ConformerBlockParams,
    ConformerModel,
};
pub use contextnet::{
    contextnet_block, contextnet_out_len, contextnet_schema, ContextNetBlockParams,
    ContextNetModel,
};
pub use count::{count_params, decoder_analytic, ParamCount, PRESET_TARGETS};
pub use schedule::lr_schedule;

/// Layer-norm epsilon used throughout the encoders.
pub const LN_EPS: f64 = 1e-6;
/// Batch-norm epsilon.
pub const BN_EPS: f64 = 1e-5;
/// Batch-norm running-statistics momentum.
pub const BN_MOMENTUM: f64 = 0.9;
/// Channel groups of the lightweight depthwise kernel.
pub const LIGHTWEIGHT_GROUPS: usize = 4;

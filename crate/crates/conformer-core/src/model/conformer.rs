//! The Conformer block and encoder.
//!
//! Default wiring per block:
//!
//! ```text
//! x1 = x  + 1/2 FFN(x)        (macaron half-step)
//! x2 = x1 + MHSA(x1)
//! x3 = x2 + Conv(x2)
//! y  = LayerNorm(x3 + 1/2 FFN(x3))
//! ```
//!
//! Ablation rows rewire the block: `single` keeps only the trailing FFN
//! with a full residual, `conv_first` swaps the attention and convolution
//! stages, `parallel` feeds both from the same input and merges their
//! concatenation through a learned 2d -> d projection, and `full` lifts
//! the FFN residual coefficients to 1. The encoder prepends a 4x
//! convolutional subsampling stem; the absolute-position variant adds
//! fixed sinusoids once right after subsampling.

use crate::ctx::{ForwardCtx, Mode};
use crate::error::{Error, Result};
use crate::io::ParamTree;
use crate::modules::{
    absolute_positions, conv_module, conv_subsample, feed_forward, mhsa, ConvModuleParams,
    DepthwiseKind, FeedForwardParams, MhsaParams, SubsampleParams,
};
use crate::ops::{add, concat_cols, layer_norm, matmul, scale};
use crate::params::{build_params, MountedParams, SchemaEntry};
use crate::rng::{stream_rng, Stream};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

use super::config::{
    ConformerConfig, ConvKindSpec, ConvPosition, FfnStyle, PosEmb, ResidualScale,
};
use super::{LIGHTWEIGHT_GROUPS, LN_EPS, BN_EPS};

fn depthwise_kind(cfg: &ConformerConfig) -> DepthwiseKind {
    match cfg.ablation.conv_kind {
        ConvKindSpec::Depthwise => DepthwiseKind::Full,
        ConvKindSpec::Lightweight => DepthwiseKind::Lightweight {
            groups: LIGHTWEIGHT_GROUPS,
        },
    }
}

/// Residual coefficient applied to the feed-forward modules.
fn ffn_coefficient(cfg: &ConformerConfig) -> f64 {
    match (cfg.ablation.ffn_style, cfg.ablation.residual) {
        (FfnStyle::MacaronHalf, ResidualScale::Half) => 0.5,
        _ => 1.0,
    }
}

/// Parameter listing of one block under `prefix`.
pub fn block_schema(prefix: &str, cfg: &ConformerConfig) -> Vec<SchemaEntry> {
    let d = cfg.d_model;
    let ab = &cfg.ablation;
    let mut schema = Vec::new();
    if ab.ffn_style == FfnStyle::MacaronHalf {
        schema.extend(FeedForwardParams::schema(
            &format!("{prefix}/ffn1"),
            d,
            cfg.ffn_expansion,
        ));
    }
    schema.extend(MhsaParams::schema(
        &format!("{prefix}/mhsa"),
        d,
        ab.pos_emb == PosEmb::Relative,
    ));
    if ab.conv_module {
        schema.extend(ConvModuleParams::<f64>::schema(
            &format!("{prefix}/conv"),
            d,
            cfg.conv_kernel,
            depthwise_kind(cfg),
        ));
    }
    if ab.conv_position == ConvPosition::ParallelConcat {
        schema.push(SchemaEntry::weight(
            format!("{prefix}/merge/weight"),
            vec![2 * d, d],
            2 * d,
            d,
        ));
    }
    schema.extend(FeedForwardParams::schema(
        &format!("{prefix}/ffn2"),
        d,
        cfg.ffn_expansion,
    ));
    schema.push(SchemaEntry::ones(format!("{prefix}/final_ln/gamma"), vec![d]));
    schema.push(SchemaEntry::zeros(format!("{prefix}/final_ln/beta"), vec![d]));
    schema
}

/// One block's parameters bound to a tape.
pub struct ConformerBlockParams<S: Scalar> {
    pub ffn1: Option<FeedForwardParams>,
    pub mhsa: MhsaParams,
    pub conv: Option<ConvModuleParams<S>>,
    pub merge: Option<Var>,
    pub ffn2: FeedForwardParams,
    pub final_ln_gamma: Var,
    pub final_ln_beta: Var,
}

pub fn mount_block<S: Scalar>(
    m: &MountedParams<S>,
    prefix: &str,
    cfg: &ConformerConfig,
) -> Result<ConformerBlockParams<S>> {
    let ab = &cfg.ablation;
    let ffn1 = if ab.ffn_style == FfnStyle::MacaronHalf {
        Some(FeedForwardParams::mount(m, &format!("{prefix}/ffn1"))?)
    } else {
        None
    };
    let mhsa = MhsaParams::mount(
        m,
        &format!("{prefix}/mhsa"),
        cfg.num_heads,
        ab.pos_emb == PosEmb::Relative,
    )?;
    let conv = if ab.conv_module {
        Some(ConvModuleParams::mount(
            m,
            &format!("{prefix}/conv"),
            cfg.conv_kernel,
            depthwise_kind(cfg),
        )?)
    } else {
        None
    };
    let merge = if ab.conv_position == ConvPosition::ParallelConcat {
        Some(m.var(&format!("{prefix}/merge/weight"))?)
    } else {
        None
    };
    Ok(ConformerBlockParams {
        ffn1,
        mhsa,
        conv,
        merge,
        ffn2: FeedForwardParams::mount(m, &format!("{prefix}/ffn2"))?,
        final_ln_gamma: m.var(&format!("{prefix}/final_ln/gamma"))?,
        final_ln_beta: m.var(&format!("{prefix}/final_ln/beta"))?,
    })
}

fn add_ffn<S: Scalar>(
    tape: &mut Tape<S>,
    h: Var,
    p: &FeedForwardParams,
    cfg: &ConformerConfig,
    coeff: f64,
    ctx: &mut ForwardCtx,
) -> Result<Var> {
    let f = feed_forward(
        tape,
        h,
        p,
        cfg.ablation.activation.act(),
        cfg.dropout,
        LN_EPS,
        ctx,
    )?;
    let f = if coeff == 1.0 {
        f
    } else {
        scale(tape, f, S::from_f64(coeff))
    };
    add(tape, h, f)
}

fn run_conv<S: Scalar>(
    tape: &mut Tape<S>,
    h: Var,
    p: &ConvModuleParams<S>,
    cfg: &ConformerConfig,
    mode: Mode,
    ctx: &mut ForwardCtx,
) -> Result<Var> {
    conv_module(
        tape,
        h,
        p,
        cfg.ablation.activation.act(),
        cfg.dropout,
        LN_EPS,
        BN_EPS,
        mode,
        ctx,
    )
}

/// One full block on `[T, d]` input.
pub fn conformer_block<S: Scalar>(
    tape: &mut Tape<S>,
    x: Var,
    p: &ConformerBlockParams<S>,
    cfg: &ConformerConfig,
    mode: Mode,
    ctx: &mut ForwardCtx,
) -> Result<Var> {
    let coeff = ffn_coefficient(cfg);
    let mut h = x;
    if let Some(ffn1) = &p.ffn1 {
        h = add_ffn(tape, h, ffn1, cfg, coeff, ctx)?;
    }
    match cfg.ablation.conv_position {
        ConvPosition::AfterMhsa => {
            let a = mhsa(tape, h, &p.mhsa, cfg.dropout, LN_EPS, ctx)?;
            h = add(tape, h, a)?;
            if let Some(conv) = &p.conv {
                let c = run_conv(tape, h, conv, cfg, mode, ctx)?;
                h = add(tape, h, c)?;
            }
        }
        ConvPosition::BeforeMhsa => {
            if let Some(conv) = &p.conv {
                let c = run_conv(tape, h, conv, cfg, mode, ctx)?;
                h = add(tape, h, c)?;
            }
            let a = mhsa(tape, h, &p.mhsa, cfg.dropout, LN_EPS, ctx)?;
            h = add(tape, h, a)?;
        }
        ConvPosition::ParallelConcat => {
            let conv = p.conv.as_ref().ok_or_else(|| {
                Error::Config("parallel_concat placement requires the convolution module".into())
            })?;
            let merge = p
                .merge
                .ok_or_else(|| Error::Contract("parallel block is missing its merge projection".into()))?;
            let a = mhsa(tape, h, &p.mhsa, cfg.dropout, LN_EPS, ctx)?;
            let c = run_conv(tape, h, conv, cfg, mode, ctx)?;
            let cat = concat_cols(tape, &[a, c])?;
            let merged = matmul(tape, cat, merge)?;
            h = add(tape, h, merged)?;
        }
    }
    h = add_ffn(tape, h, &p.ffn2, cfg, coeff, ctx)?;
    layer_norm(tape, h, p.final_ln_gamma, p.final_ln_beta, LN_EPS)
}

/// Parameter listing of the full encoder: subsampling stem plus
/// `num_layers` blocks named `block0..`.
pub fn conformer_schema(cfg: &ConformerConfig) -> Result<Vec<SchemaEntry>> {
    let mut schema = SubsampleParams::schema("subsample", cfg.n_mels, cfg.d_model)?;
    for i in 0..cfg.num_layers {
        schema.extend(block_schema(&format!("block{i}"), cfg));
    }
    Ok(schema)
}

/// A built encoder: configuration, schema, and parameter storage.
pub struct ConformerModel<S: Scalar> {
    pub cfg: ConformerConfig,
    pub schema: Vec<SchemaEntry>,
    pub params: ParamTree<S>,
}

impl<S: Scalar> ConformerModel<S> {
    /// Draw all parameters from the seeded parameter stream.
    pub fn build(cfg: ConformerConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let schema = conformer_schema(&cfg)?;
        let params = build_params(&schema, &mut stream_rng(seed, Stream::Params))?;
        Ok(ConformerModel { cfg, schema, params })
    }

    /// Full forward pass on one tape. Builds the whole graph, so gradients
    /// can flow to every parameter; prefer [`encode`](Self::encode) for
    /// large inputs.
    pub fn encode_on_tape(
        &self,
        tape: &mut Tape<S>,
        x: Var,
        mode: Mode,
        ctx: &mut ForwardCtx,
    ) -> Result<Var> {
        let m = MountedParams::from_tree(tape, &self.params, &self.schema)?;
        let sub = SubsampleParams::mount(&m, "subsample")?;
        let mut h = conv_subsample(tape, x, &sub, self.cfg.dropout, ctx)?;
        if self.cfg.ablation.pos_emb == PosEmb::Absolute {
            let t = tape.shape(h)[0];
            let table = tape.constant(absolute_positions::<S>(t, self.cfg.d_model));
            h = add(tape, h, table)?;
        }
        for i in 0..self.cfg.num_layers {
            let bp = mount_block(&m, &format!("block{i}"), &self.cfg)?;
            h = conformer_block(tape, h, &bp, &self.cfg, mode, ctx)?;
        }
        Ok(h)
    }

    /// Forward pass with one short-lived tape per stage, keeping peak
    /// memory at one block's activations. Bit-identical to
    /// [`encode_on_tape`](Self::encode_on_tape).
    pub fn encode(&self, features: &Tensor<S>, mode: Mode, seed: u64) -> Result<Tensor<S>> {
        let mut ctx = ForwardCtx::with_mode(mode, seed);
        let sub_schema = SubsampleParams::schema("subsample", self.cfg.n_mels, self.cfg.d_model)?;
        let mut current = {
            let mut tape = Tape::<S>::no_grad();
            let m = MountedParams::from_tree(&mut tape, &self.params, &sub_schema)?;
            let sub = SubsampleParams::mount(&m, "subsample")?;
            let x = tape.leaf(features.clone(), false);
            let mut h = conv_subsample(&mut tape, x, &sub, self.cfg.dropout, &mut ctx)?;
            if self.cfg.ablation.pos_emb == PosEmb::Absolute {
                let t = tape.shape(h)[0];
                let table = tape.constant(absolute_positions::<S>(t, self.cfg.d_model));
                h = add(&mut tape, h, table)?;
            }
            tape.value(h).clone()
        };
        for i in 0..self.cfg.num_layers {
            let prefix = format!("block{i}");
            let bs = block_schema(&prefix, &self.cfg);
            let mut tape = Tape::<S>::no_grad();
            let m = MountedParams::from_tree(&mut tape, &self.params, &bs)?;
            let bp = mount_block(&m, &prefix, &self.cfg)?;
            let x = tape.leaf(current, false);
            let y = conformer_block(&mut tape, x, &bp, &self.cfg, mode, &mut ctx)?;
            current = tape.value(y).clone();
        }
        Ok(current)
    }
}

//! ContextNet-style encoder built from depthwise-separable convolution
//! blocks with squeeze-and-excitation.
//!
//! Each block computes `C(x) = SE(f_m(...f_1(x))) + proj(x)` where every
//! layer `f` is a separable convolution (depthwise filter of width 5, then
//! pointwise) followed by batch norm and Swish. A block's stride applies to
//! the time axis of its first layer; the residual branch is the identity
//! when shapes already agree and a bare pointwise projection on the strided
//! input otherwise. The width multiplier `alpha` rescales every block's
//! channel count except the final one.

use crate::ctx::{ForwardCtx, Mode};
use crate::error::{Error, Result};
use crate::io::ParamTree;
use crate::modules::{same_padding, squeeze_excite, SeParams, SePooling};
use crate::ops::{activation, add, batch_norm, conv1d, stride_time, Act, BatchNormState, ConvKind};
use crate::params::{build_params, MountedParams, SchemaEntry};
use crate::rng::{stream_rng, Stream};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

use super::config::{ContextNetBlockSpec, ContextNetConfig};
use super::BN_EPS;

/// Minimum input length: three stride-2 blocks need at least one frame left.
pub const MIN_FRAMES: usize = 8;

fn layer_schema(prefix: &str, in_c: usize, out_c: usize, k: usize) -> Vec<SchemaEntry> {
    vec![
        SchemaEntry::weight(format!("{prefix}/dw/kernel"), vec![k, in_c], k, k),
        SchemaEntry::weight(format!("{prefix}/pw/weight"), vec![in_c, out_c], in_c, out_c),
        SchemaEntry::ones(format!("{prefix}/bn/gamma"), vec![out_c]),
        SchemaEntry::zeros(format!("{prefix}/bn/beta"), vec![out_c]),
        SchemaEntry::state_zeros(format!("{prefix}/bn/running_mean"), vec![out_c]),
        SchemaEntry::state_ones(format!("{prefix}/bn/running_var"), vec![out_c]),
    ]
}

fn needs_projection(in_c: usize, out_c: usize, stride: usize) -> bool {
    in_c != out_c || stride != 1
}

/// Parameter listing of one block under `prefix` with `in_c` input channels.
pub fn contextnet_block_schema(
    prefix: &str,
    in_c: usize,
    out_c: usize,
    spec: &ContextNetBlockSpec,
) -> Vec<SchemaEntry> {
    let mut schema = Vec::new();
    let mut c = in_c;
    for j in 0..spec.num_conv_layers {
        schema.extend(layer_schema(
            &format!("{prefix}/layer{j}"),
            c,
            out_c,
            spec.filter_size,
        ));
        c = out_c;
    }
    if spec.se {
        schema.extend(SeParams::schema(&format!("{prefix}/se"), out_c));
    }
    if needs_projection(in_c, out_c, spec.stride) {
        schema.push(SchemaEntry::weight(
            format!("{prefix}/res/pw/weight"),
            vec![in_c, out_c],
            in_c,
            out_c,
        ));
    }
    schema
}

struct SeparableLayer<S: Scalar> {
    dw_kernel: Var,
    pw_weight: Var,
    bn_gamma: Var,
    bn_beta: Var,
    bn_state: BatchNormState<S>,
}

/// One block's parameters bound to a tape.
pub struct ContextNetBlockParams<S: Scalar> {
    layers: Vec<SeparableLayer<S>>,
    se: Option<SeParams>,
    res_proj: Option<Var>,
}

pub fn mount_contextnet_block<S: Scalar>(
    m: &MountedParams<S>,
    prefix: &str,
    in_c: usize,
    out_c: usize,
    spec: &ContextNetBlockSpec,
) -> Result<ContextNetBlockParams<S>> {
    let mut layers = Vec::with_capacity(spec.num_conv_layers);
    for j in 0..spec.num_conv_layers {
        let lp = format!("{prefix}/layer{j}");
        layers.push(SeparableLayer {
            dw_kernel: m.var(&format!("{lp}/dw/kernel"))?,
            pw_weight: m.var(&format!("{lp}/pw/weight"))?,
            bn_gamma: m.var(&format!("{lp}/bn/gamma"))?,
            bn_beta: m.var(&format!("{lp}/bn/beta"))?,
            bn_state: BatchNormState {
                mean: m.state(&format!("{lp}/bn/running_mean"))?.clone(),
                var: m.state(&format!("{lp}/bn/running_var"))?.clone(),
            },
        });
    }
    let se = if spec.se {
        Some(SeParams::mount(m, &format!("{prefix}/se"))?)
    } else {
        None
    };
    let res_proj = if needs_projection(in_c, out_c, spec.stride) {
        Some(m.var(&format!("{prefix}/res/pw/weight"))?)
    } else {
        None
    };
    Ok(ContextNetBlockParams { layers, se, res_proj })
}

/// One full block on `[T, C_in]` input, producing `[ceil(T/stride), C_out]`.
pub fn contextnet_block<S: Scalar>(
    tape: &mut Tape<S>,
    x: Var,
    p: &ContextNetBlockParams<S>,
    spec: &ContextNetBlockSpec,
    pooling: SePooling,
    mode: Mode,
    ctx: &mut ForwardCtx,
) -> Result<Var> {
    let pad = same_padding(spec.filter_size);
    let mut h = x;
    for (j, layer) in p.layers.iter().enumerate() {
        h = conv1d(tape, h, layer.dw_kernel, None, ConvKind::Depthwise, pad)?;
        if j == 0 && spec.stride > 1 {
            h = stride_time(tape, h, spec.stride)?;
        }
        h = conv1d(tape, h, layer.pw_weight, None, ConvKind::Pointwise, (0, 0))?;
        h = batch_norm(
            tape,
            h,
            layer.bn_gamma,
            layer.bn_beta,
            &layer.bn_state,
            BN_EPS,
            mode,
            None,
        )?;
        h = activation(tape, h, Act::Swish);
    }
    if let Some(se) = &p.se {
        h = squeeze_excite(tape, h, se, pooling, Act::Swish, ctx)?;
    }
    let residual = match p.res_proj {
        Some(proj) => {
            let strided = if spec.stride > 1 {
                stride_time(tape, x, spec.stride)?
            } else {
                x
            };
            conv1d(tape, strided, proj, None, ConvKind::Pointwise, (0, 0))?
        }
        None => x,
    };
    add(tape, h, residual)
}

/// Parameter listing of the full encoder, blocks named `block0..`.
pub fn contextnet_schema(cfg: &ContextNetConfig) -> Vec<SchemaEntry> {
    let mut schema = Vec::new();
    let mut in_c = cfg.n_mels;
    for (i, spec) in cfg.blocks.iter().enumerate() {
        let out_c = cfg.scaled_channels(i);
        schema.extend(contextnet_block_schema(&format!("block{i}"), in_c, out_c, spec));
        in_c = out_c;
    }
    schema
}

/// Output length after all strided blocks: `ceil(T/2)` per stride-2 block.
pub fn contextnet_out_len(cfg: &ContextNetConfig, t: usize) -> usize {
    cfg.blocks.iter().fold(t, |acc, b| {
        if b.stride > 1 {
            acc.div_ceil(b.stride)
        } else {
            acc
        }
    })
}

fn se_pooling(cfg: &ContextNetConfig) -> SePooling {
    match cfg.se_window {
        Some(w) => SePooling::Window(w),
        None => SePooling::Global,
    }
}

/// A built encoder: configuration, schema, and parameter storage.
pub struct ContextNetModel<S: Scalar> {
    pub cfg: ContextNetConfig,
    pub schema: Vec<SchemaEntry>,
    pub params: ParamTree<S>,
}

impl<S: Scalar> ContextNetModel<S> {
    /// Draw all parameters from the seeded parameter stream.
    pub fn build(cfg: ContextNetConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let schema = contextnet_schema(&cfg);
        let params = build_params(&schema, &mut stream_rng(seed, Stream::Params))?;
        Ok(ContextNetModel { cfg, schema, params })
    }

    /// Full forward pass on one tape.
    pub fn encode_on_tape(
        &self,
        tape: &mut Tape<S>,
        x: Var,
        mode: Mode,
        ctx: &mut ForwardCtx,
    ) -> Result<Var> {
        let t = tape.shape(x)[0];
        if t < MIN_FRAMES {
            return Err(Error::dimension(
                "contextnet",
                format!("input of {t} frames is too short, need at least {MIN_FRAMES}"),
            ));
        }
        let m = MountedParams::from_tree(tape, &self.params, &self.schema)?;
        let pooling = se_pooling(&self.cfg);
        let mut h = x;
        let mut in_c = self.cfg.n_mels;
        for (i, spec) in self.cfg.blocks.iter().enumerate() {
            let out_c = self.cfg.scaled_channels(i);
            let bp = mount_contextnet_block(&m, &format!("block{i}"), in_c, out_c, spec)?;
            h = contextnet_block(tape, h, &bp, spec, pooling, mode, ctx)?;
            in_c = out_c;
        }
        Ok(h)
    }

    /// Forward pass with one short-lived tape per block. Bit-identical to
    /// [`encode_on_tape`](Self::encode_on_tape).
    pub fn encode(&self, features: &Tensor<S>, mode: Mode, seed: u64) -> Result<Tensor<S>> {
        if features.rank() != 2 || features.dim(1) != self.cfg.n_mels {
            return Err(Error::dimension(
                "contextnet",
                format!(
                    "expected [T, {}] features, got {:?}",
                    self.cfg.n_mels,
                    features.shape()
                ),
            ));
        }
        let t = features.dim(0);
        if t < MIN_FRAMES {
            return Err(Error::dimension(
                "contextnet",
                format!("input of {t} frames is too short, need at least {MIN_FRAMES}"),
            ));
        }
        let mut ctx = ForwardCtx::with_mode(mode, seed);
        let pooling = se_pooling(&self.cfg);
        let mut current = features.clone();
        let mut in_c = self.cfg.n_mels;
        for (i, spec) in self.cfg.blocks.iter().enumerate() {
            let out_c = self.cfg.scaled_channels(i);
            let prefix = format!("block{i}");
            let bs = contextnet_block_schema(&prefix, in_c, out_c, spec);
            let mut tape = Tape::<S>::no_grad();
            let m = MountedParams::from_tree(&mut tape, &self.params, &bs)?;
            let bp = mount_contextnet_block(&m, &prefix, in_c, out_c, spec)?;
            let x = tape.leaf(current, false);
            let y = contextnet_block(&mut tape, x, &bp, spec, pooling, mode, &mut ctx)?;
            current = tape.value(y).clone();
            in_c = out_c;
        }
        Ok(current)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::grad_check_multi;
    use crate::ops::sum_all;
    use crate::params::trainable_tensors;
    use rand::Rng;

    fn tiny_cfg() -> ContextNetConfig {
        ContextNetConfig {
            alpha: 1.0,
            n_mels: 6,
            se_window: None,
            blocks: vec![
                ContextNetBlockSpec { num_conv_layers: 1, out_channels: 8, filter_size: 5, stride: 1, se: true },
                ContextNetBlockSpec { num_conv_layers: 2, out_channels: 8, filter_size: 5, stride: 2, se: true },
                ContextNetBlockSpec { num_conv_layers: 2, out_channels: 10, filter_size: 5, stride: 2, se: false },
                ContextNetBlockSpec { num_conv_layers: 1, out_channels: 10, filter_size: 5, stride: 2, se: true },
            ],
        }
    }

    #[test]
    fn out_len_folds_ceil_per_strided_block() {
        let cfg = tiny_cfg();
        assert_eq!(contextnet_out_len(&cfg, 16), 2);
        assert_eq!(contextnet_out_len(&cfg, 100), 13);
        assert_eq!(contextnet_out_len(&cfg, 1000), 125);
        let standard = ContextNetConfig::standard();
        assert_eq!(contextnet_out_len(&standard, 1000), 125);
        assert_eq!(contextnet_out_len(&standard, 99), 13);
    }

    #[test]
    fn encode_shape_matches_formula() {
        let cfg = tiny_cfg();
        let model = ContextNetModel::<f64>::build(cfg.clone(), 3).unwrap();
        let mut rng = stream_rng(4, Stream::Input);
        for t in [8usize, 21, 64] {
            let f = Tensor::<f64>::from_fn(&[t, 6], |_| rng.random_range(-1.0..1.0));
            let y = model.encode(&f, Mode::Infer, 0).unwrap();
            assert_eq!(y.shape(), &[contextnet_out_len(&cfg, t), 10]);
        }
    }

    #[test]
    fn too_short_input_is_rejected() {
        let model = ContextNetModel::<f64>::build(tiny_cfg(), 0).unwrap();
        let f = Tensor::<f64>::zeros(&[7, 6]);
        let err = model.encode(&f, Mode::Infer, 0).unwrap_err();
        assert!(err.to_string().contains("too short"), "{err}");
    }

    #[test]
    fn zero_weights_pass_identity_blocks_through() {
        // one projected block into a same-shape block: with all weights zero
        // the second block must return its input exactly
        let cfg = ContextNetConfig {
            alpha: 1.0,
            n_mels: 4,
            se_window: None,
            blocks: vec![
                ContextNetBlockSpec { num_conv_layers: 1, out_channels: 5, filter_size: 5, stride: 2, se: true },
                ContextNetBlockSpec { num_conv_layers: 3, out_channels: 5, filter_size: 5, stride: 2, se: true },
                ContextNetBlockSpec { num_conv_layers: 1, out_channels: 5, filter_size: 5, stride: 2, se: false },
            ],
        };
        let mut model = ContextNetModel::<f64>::build(cfg.clone(), 1).unwrap();
        for e in model.schema.clone().iter().filter(|e| e.trainable) {
            model.params.set(&e.name, Tensor::zeros(&e.shape)).unwrap();
        }
        let mut rng = stream_rng(9, Stream::Input);
        let x = Tensor::<f64>::from_fn(&[5, 5], |_| rng.random_range(-1.0..1.0));

        // run only block1 (same channels, stride 2 means it projects; instead
        // check a stride-1 clone of it for the identity property)
        let spec = ContextNetBlockSpec { num_conv_layers: 3, out_channels: 5, filter_size: 5, stride: 1, se: true };
        let bs = contextnet_block_schema("b", 5, 5, &spec);
        let mut tree: ParamTree<f64> =
            build_params(&bs, &mut stream_rng(2, Stream::Params)).unwrap();
        for e in bs.iter().filter(|e| e.trainable) {
            tree.set(&e.name, Tensor::zeros(&e.shape)).unwrap();
        }
        let mut tape = Tape::<f64>::new();
        let m = MountedParams::from_tree(&mut tape, &tree, &bs).unwrap();
        let bp = mount_contextnet_block(&m, "b", 5, 5, &spec).unwrap();
        let xv = tape.leaf(x.clone(), false);
        let mut ctx = ForwardCtx::infer();
        let y = contextnet_block(&mut tape, xv, &bp, &spec, SePooling::Global, Mode::Infer, &mut ctx).unwrap();
        assert_eq!(tape.value(y), &x);

        // the full zeroed model ends in chained zero projections
        let f = Tensor::<f64>::from_fn(&[16, 4], |_| rng.random_range(-1.0..1.0));
        let out = model.encode(&f, Mode::Infer, 0).unwrap();
        assert_eq!(out, Tensor::zeros(&[2, 5]));
    }

    #[test]
    fn block_wise_encode_equals_single_tape() {
        let cfg = tiny_cfg();
        let model = ContextNetModel::<f64>::build(cfg, 7).unwrap();
        let mut rng = stream_rng(8, Stream::Input);
        let f = Tensor::<f64>::from_fn(&[24, 6], |_| rng.random_range(-1.0..1.0));
        let a = model.encode(&f, Mode::Infer, 0).unwrap();
        let mut tape = Tape::<f64>::new();
        let xv = tape.leaf(f, false);
        let mut ctx = ForwardCtx::infer();
        let y = model.encode_on_tape(&mut tape, xv, Mode::Infer, &mut ctx).unwrap();
        assert_eq!(&a, tape.value(y));
    }

    #[test]
    fn windowed_se_changes_output() {
        let mut cfg = tiny_cfg();
        let a = ContextNetModel::<f64>::build(cfg.clone(), 5).unwrap();
        cfg.se_window = Some(3);
        let b = ContextNetModel::<f64>::build(cfg, 5).unwrap();
        let mut rng = stream_rng(6, Stream::Input);
        let f = Tensor::<f64>::from_fn(&[16, 6], |_| rng.random_range(-1.0..1.0));
        let ya = a.encode(&f, Mode::Infer, 0).unwrap();
        let yb = b.encode(&f, Mode::Infer, 0).unwrap();
        assert_eq!(ya.shape(), yb.shape());
        assert!(ya.max_abs_diff(&yb).unwrap() > 1e-9);
    }

    #[test]
    fn alpha_scales_all_but_final_block() {
        let mut cfg = ContextNetConfig::standard();
        cfg.alpha = 0.5;
        assert_eq!(cfg.scaled_channels(0), 128);
        assert_eq!(cfg.scaled_channels(15), 256);
        assert_eq!(cfg.scaled_channels(30), 640);
        let schema = contextnet_schema(&cfg);
        let first_pw = schema.iter().find(|e| e.name == "block0/layer0/pw/weight").unwrap();
        assert_eq!(first_pw.shape, vec![80, 128]);
        // the final block keeps 640 outputs but inherits scaled inputs
        let last_pw = schema.iter().find(|e| e.name == "block30/layer0/pw/weight").unwrap();
        assert_eq!(last_pw.shape, vec![256, 640]);
    }

    #[test]
    fn block_grad_checks() {
        for (in_c, spec) in [
            (4usize, ContextNetBlockSpec { num_conv_layers: 2, out_channels: 4, filter_size: 5, stride: 1, se: true }),
            (3, ContextNetBlockSpec { num_conv_layers: 2, out_channels: 5, filter_size: 5, stride: 2, se: true }),
        ] {
            let out_c = spec.out_channels;
            let schema = contextnet_block_schema("b", in_c, out_c, &spec);
            let mut rng = stream_rng(11, Stream::Params);
            let params = trainable_tensors(&schema, &mut rng);
            let x = Tensor::from_fn(&[6, in_c], |i| 0.17 * ((i % 11) as f64) - 0.7);
            let mut inputs = vec![x];
            inputs.extend(params);
            let schema2 = schema.clone();
            let spec2 = spec;
            let report = grad_check_multi(&inputs, 1e-5, move |tape, vars| {
                let m = MountedParams::<f64>::from_vars(&schema2, &vars[1..])?;
                let bp = mount_contextnet_block(&m, "b", in_c, out_c, &spec2)?;
                let mut ctx = ForwardCtx::infer();
                let y = contextnet_block(tape, vars[0], &bp, &spec2, SePooling::Global, Mode::Train, &mut ctx)?;
                Ok(sum_all(tape, y))
            })
            .unwrap();
            assert!(report.max_rel_err < 1e-5, "max err {}", report.max_rel_err);
        }
    }
}

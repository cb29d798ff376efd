//! Convolution module: pointwise expansion with GLU gating, a depthwise
//! convolution over time, batch normalization, activation, pointwise
//! projection, and output dropout.
//!
//! `y = Dropout(Wp2 . Act(BN(DWConv_k(GLU(Wp1 . LN(x) + b_p1)) + b_dw)) + b_p2)`
//!
//! SAME padding over time puts `floor((k-1)/2)` zeros on the left and
//! `floor(k/2)` on the right, so even kernels pad one more frame on the
//! right. The lightweight variant stores one kernel per channel group,
//! softmax-normalizes it over the taps, and shares it across the group.

use crate::ctx::{ForwardCtx, Mode};
use crate::error::Result;
use crate::ops::{
    activation, batch_norm, conv1d, dropout, expand_groups, glu, layer_norm, softmax, Act,
    BatchNormState, ConvKind,
};
use crate::params::{MountedParams, SchemaEntry};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};

/// Shape of the depthwise kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthwiseKind {
    /// One kernel column per channel, applied as-is.
    Full,
    /// Softmax-normalized kernel shared across `d / groups` channels.
    Lightweight { groups: usize },
}

#[derive(Debug, Clone)]
pub struct ConvModuleParams<S: Scalar> {
    pub ln_gamma: Var,
    pub ln_beta: Var,
    pub pw1_w: Var,
    pub pw1_b: Var,
    pub dw_kernel: Var,
    pub dw_bias: Var,
    pub bn_gamma: Var,
    pub bn_beta: Var,
    pub bn_state: BatchNormState<S>,
    pub pw2_w: Var,
    pub pw2_b: Var,
    pub kind: DepthwiseKind,
    pub kernel_size: usize,
}

impl<S: Scalar> ConvModuleParams<S> {
    pub fn schema(prefix: &str, d: usize, kernel: usize, kind: DepthwiseKind) -> Vec<SchemaEntry> {
        let dw_cols = match kind {
            DepthwiseKind::Full => d,
            DepthwiseKind::Lightweight { groups } => groups,
        };
        vec![
            SchemaEntry::ones(format!("{prefix}/ln/gamma"), vec![d]),
            SchemaEntry::zeros(format!("{prefix}/ln/beta"), vec![d]),
            SchemaEntry::weight(format!("{prefix}/pw1/weight"), vec![d, 2 * d], d, 2 * d),
            SchemaEntry::zeros(format!("{prefix}/pw1/bias"), vec![2 * d]),
            SchemaEntry::weight(
                format!("{prefix}/dw/kernel"),
                vec![kernel, dw_cols],
                kernel,
                kernel,
            ),
            SchemaEntry::zeros(format!("{prefix}/dw/bias"), vec![d]),
            SchemaEntry::ones(format!("{prefix}/bn/gamma"), vec![d]),
            SchemaEntry::zeros(format!("{prefix}/bn/beta"), vec![d]),
            SchemaEntry::state_zeros(format!("{prefix}/bn/running_mean"), vec![d]),
            SchemaEntry::state_ones(format!("{prefix}/bn/running_var"), vec![d]),
            SchemaEntry::weight(format!("{prefix}/pw2/weight"), vec![d, d], d, d),
            SchemaEntry::zeros(format!("{prefix}/pw2/bias"), vec![d]),
        ]
    }

    pub fn mount(
        m: &MountedParams<S>,
        prefix: &str,
        kernel_size: usize,
        kind: DepthwiseKind,
    ) -> Result<Self> {
        Ok(ConvModuleParams {
            ln_gamma: m.var(&format!("{prefix}/ln/gamma"))?,
            ln_beta: m.var(&format!("{prefix}/ln/beta"))?,
            pw1_w: m.var(&format!("{prefix}/pw1/weight"))?,
            pw1_b: m.var(&format!("{prefix}/pw1/bias"))?,
            dw_kernel: m.var(&format!("{prefix}/dw/kernel"))?,
            dw_bias: m.var(&format!("{prefix}/dw/bias"))?,
            bn_gamma: m.var(&format!("{prefix}/bn/gamma"))?,
            bn_beta: m.var(&format!("{prefix}/bn/beta"))?,
            bn_state: BatchNormState {
                mean: m.state(&format!("{prefix}/bn/running_mean"))?.clone(),
                var: m.state(&format!("{prefix}/bn/running_var"))?.clone(),
            },
            pw2_w: m.var(&format!("{prefix}/pw2/weight"))?,
            pw2_b: m.var(&format!("{prefix}/pw2/bias"))?,
            kind,
            kernel_size,
        })
    }
}

/// SAME padding split for a kernel of width `k`.
pub fn same_padding(k: usize) -> (usize, usize) {
    ((k - 1) / 2, k / 2)
}

pub fn conv_module<S: Scalar>(
    tape: &mut Tape<S>,
    x: Var,
    p: &ConvModuleParams<S>,
    act: Act,
    dropout_p: f64,
    ln_eps: f64,
    bn_eps: f64,
    mode: Mode,
    ctx: &mut ForwardCtx,
) -> Result<Var> {
    let d = tape.shape(x)[1];
    let h = layer_norm(tape, x, p.ln_gamma, p.ln_beta, ln_eps)?;
    let h = conv1d(tape, h, p.pw1_w, Some(p.pw1_b), ConvKind::Pointwise, (0, 0))?;
    let h = glu(tape, h)?;
    let kernel = match p.kind {
        DepthwiseKind::Full => p.dw_kernel,
        DepthwiseKind::Lightweight { .. } => {
            let normalized = softmax(tape, p.dw_kernel, 0)?;
            expand_groups(tape, normalized, d)?
        }
    };
    let h = conv1d(
        tape,
        h,
        kernel,
        Some(p.dw_bias),
        ConvKind::Depthwise,
        same_padding(p.kernel_size),
    )?;
    let h = batch_norm(tape, h, p.bn_gamma, p.bn_beta, &p.bn_state, bn_eps, mode, None)?;
    let h = activation(tape, h, act);
    let h = conv1d(tape, h, p.pw2_w, Some(p.pw2_b), ConvKind::Pointwise, (0, 0))?;
    dropout(tape, h, dropout_p, ctx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::grad_check_multi;
    use crate::io::ParamTree;
    use crate::params::{build_params, trainable_tensors};
    use crate::rng::{stream_rng, Stream};
    use crate::tensor::Tensor;
    use rand::Rng;

    #[test]
    fn same_padding_splits() {
        assert_eq!(same_padding(3), (1, 1));
        assert_eq!(same_padding(32), (15, 16));
        assert_eq!(same_padding(65), (32, 32));
        assert_eq!(same_padding(1), (0, 0));
    }

    #[test]
    fn preserves_time_length_for_even_and_odd_kernels() {
        for k in [3usize, 4, 7, 32] {
            let schema = ConvModuleParams::<f64>::schema("conv", 6, k, DepthwiseKind::Full);
            let tree: ParamTree<f64> =
                build_params(&schema, &mut stream_rng(2, Stream::Params)).unwrap();
            let mut tape = Tape::<f64>::new();
            let m = MountedParams::from_tree(&mut tape, &tree, &schema).unwrap();
            let p = ConvModuleParams::mount(&m, "conv", k, DepthwiseKind::Full).unwrap();
            let mut rng = stream_rng(3, Stream::Input);
            let x = Tensor::<f64>::from_fn(&[9, 6], |_| rng.random_range(-1.0..1.0));
            let xv = tape.leaf(x, false);
            let mut ctx = ForwardCtx::infer();
            let y = conv_module(
                &mut tape, xv, &p, Act::Swish, 0.0, 1e-6, 1e-5, Mode::Infer, &mut ctx,
            )
            .unwrap();
            assert_eq!(tape.shape(y), &[9, 6], "kernel {k}");
        }
    }

    #[test]
    fn lightweight_kernel_is_shared_and_normalized() {
        // With identical inputs in all channels of a group, a shared
        // normalized kernel must produce identical outputs per group.
        let d = 8;
        let groups = 4;
        let kind = DepthwiseKind::Lightweight { groups };
        let schema = ConvModuleParams::<f64>::schema("conv", d, 3, kind);
        assert!(schema.iter().any(|e| e.name == "conv/dw/kernel" && e.shape == [3, 4]));

        // Directly exercise the kernel path: softmax + expand_groups.
        let mut tape = Tape::<f64>::new();
        let raw = tape.leaf(Tensor::from_fn(&[3, 4], |i| i as f64 * 0.1), true);
        let normalized = softmax(&mut tape, raw, 0).unwrap();
        let expanded = expand_groups(&mut tape, normalized, d).unwrap();
        let ev = tape.value(expanded);
        assert_eq!(ev.shape(), &[3, 8]);
        for g in 0..groups {
            for tap in 0..3 {
                assert_eq!(ev.at2(tap, 2 * g), ev.at2(tap, 2 * g + 1));
            }
        }
        // each expanded column sums to one over taps
        for c in 0..d {
            let s: f64 = (0..3).map(|tap| ev.at2(tap, c)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_check_for_both_kinds() {
        for kind in [DepthwiseKind::Full, DepthwiseKind::Lightweight { groups: 2 }] {
            let schema = ConvModuleParams::<f64>::schema("conv", 4, 3, kind);
            let mut rng = stream_rng(17, Stream::Params);
            let params: Vec<Tensor<f64>> = trainable_tensors(&schema, &mut rng);
            let x = Tensor::from_fn(&[5, 4], |i| 0.3 * ((i % 5) as f64) - 0.7);
            let mut inputs = vec![x];
            inputs.extend(params);
            let report = grad_check_multi(&inputs, 1e-5, |tape, vars| {
                let m = MountedParams::<f64>::from_vars(&schema, &vars[1..])?;
                let p = ConvModuleParams::mount(&m, "conv", 3, kind)?;
                let mut ctx = ForwardCtx::infer();
                let y = conv_module(
                    tape, vars[0], &p, Act::Swish, 0.0, 1e-6, 1e-5, Mode::Train, &mut ctx,
                )?;
                Ok(crate::ops::sum_all(tape, y))
            })
            .unwrap();
            assert!(report.max_rel_err < 1e-5, "{kind:?} max err {}", report.max_rel_err);
        }
    }
}
